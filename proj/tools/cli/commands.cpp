#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <vector>

#include "cli/csv.hpp"
#include "cli/manifest.hpp"
#include "cli/parallel.hpp"
#include "swapcalc/fock.hpp"
#include "swapcalc/repeater.hpp"
#include "swapcalc/type2.hpp"

namespace swapcalc::cli {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

SigmaRule rule_of(int sigma) { return sigma ? SigmaRule::standard() : SigmaRule::absm(); }

const char* protocol_name(int sigma) { return sigma ? "standard" : "absm"; }

void finish(const Config& cfg, const RunOptions& run, const std::string& command,
            const CsvTable& table, Clock::time_point start, std::ostream& log) {
  const std::string content = table.to_string();
  table.write_file(run.out_path);
  RunManifest manifest;
  manifest.command = command;
  manifest.config = cfg;
  manifest.seed = run.seed;
  manifest.threads = run.threads;
  manifest.duration_ms = elapsed_ms(start);
  manifest.add_output(run.out_path, content);
  manifest.write(run.out_path + ".manifest.json");
  log << command << ": wrote " << table.row_count() << " rows to " << run.out_path << "\n";
}

}  // namespace

int cmd_fidelity_chain(const Config& cfg, const RunOptions& run, std::ostream& log) {
  const auto start = Clock::now();
  const int ell_min = cfg.get_int("fidelity_chain.ell_min", 1);
  const int ell_max = cfg.get_int("fidelity_chain.ell_max", 12);
  const double p = cfg.get_double("fidelity_chain.p", 0.01);
  const double eta = cfg.get_double("fidelity_chain.eta", 0.0);
  const double eta_r = cfg.get_double("fidelity_chain.eta_r", 0.9);
  const double target_f = cfg.get_double("fidelity_chain.target_fidelity", 0.9);
  if (ell_min < 1 || ell_max < ell_min)
    throw std::runtime_error("fidelity_chain: need 1 <= ell_min <= ell_max");

  CsvTable table({"ell", "sigma", "fidelity", "gain"});
  for (int ell = ell_min; ell <= ell_max; ++ell) {
    const double gain = elementary_gain(target_f, ell, eta, eta_r);
    for (int sigma : {1, 0}) {
      const double f = closed_form_fidelity({ell, eta, eta_r, p, rule_of(sigma)});
      table.add_row({static_cast<long long>(ell), static_cast<long long>(sigma), f, gain});
    }
  }
  finish(cfg, run, "fidelity-chain", table, start, log);
  return 0;
}

int cmd_link_efficiency(const Config& cfg, const RunOptions& run, std::ostream& log) {
  const auto start = Clock::now();
  const double db_min = cfg.get_double("link_efficiency.db_min", 40.0);
  const double db_max = cfg.get_double("link_efficiency.db_max", 120.0);
  const int steps = cfg.get_int("link_efficiency.steps", 81);
  const double fidelity = cfg.get_double("link_efficiency.fidelity", 0.9);
  const double eta_r = cfg.get_double("link_efficiency.eta_r", 0.9);
  const double eta_d = cfg.get_double("link_efficiency.eta_d", 0.9);
  const int ell_max = cfg.get_int("link_efficiency.ell_max", 32);
  if (steps < 1 || db_max < db_min) throw std::runtime_error("link_efficiency: bad loss grid");

  struct Row {
    double db = 0.0;
    OptimalLinkCount best[2];
  };
  std::vector<Row> rows(static_cast<std::size_t>(steps));
  parallel_for(rows.size(), run.threads, [&](std::size_t i) {
    Row& r = rows[i];
    r.db = steps == 1 ? db_min : db_min + (db_max - db_min) * static_cast<double>(i) / (steps - 1);
    for (int sigma : {1, 0})
      r.best[sigma] = optimal_link_count(r.db, fidelity, eta_r, eta_d, ell_max, rule_of(sigma));
  });

  CsvTable table({"total_loss_db", "distance_km", "ell_opt", "eta_tilde", "protocol"});
  for (const Row& r : rows) {
    for (int sigma : {1, 0}) {
      table.add_row({r.db, r.db / kFiberAttenuationDbPerKm,
                     static_cast<long long>(r.best[sigma].ell), r.best[sigma].eta_tilde_ab,
                     std::string(protocol_name(sigma))});
    }
  }
  finish(cfg, run, "link-efficiency", table, start, log);
  return 0;
}

int cmd_imbalance_map(const Config& cfg, const RunOptions& run, std::ostream& log) {
  const auto start = Clock::now();
  const double total_db = cfg.get_double("imbalance_map.total_db", 40.0);
  const double p = cfg.get_double("imbalance_map.p", 0.01);
  const double eta_r = cfg.get_double("imbalance_map.eta_r", 0.9);
  const double split_max = cfg.get_double("imbalance_map.split_max", 20.0);
  const int steps = cfg.get_int("imbalance_map.steps", 41);
  const int chain_ell_max = cfg.get_int("imbalance_map.chain_ell_max", 4);
  if (steps < 2 || split_max <= 0) throw std::runtime_error("imbalance_map: bad split grid");

  struct Cell {
    std::string chain;
    int ell;
    double split_db;
    int sigma;
    double fidelity;
  };
  std::vector<Cell> cells;
  for (int i = 0; i < steps; ++i) {
    const double split = -split_max + 2.0 * split_max * i / (steps - 1);
    for (int sigma : {1, 0}) {
      // keep only splits that leave both channels of the split pair lossy
      if (std::abs(split) <= total_db) cells.push_back({"type1", 1, split, sigma, 0.0});
      if (std::abs(split) <= total_db / 2.0)
        cells.push_back({"type2sym", 1, split, sigma, 0.0});
      for (int ell = 1; ell <= chain_ell_max; ++ell) {
        if (std::abs(split) > total_db / ell) continue;
        cells.push_back({"type1a", ell, split, sigma, 0.0});
        cells.push_back({"type1b", ell, split, sigma, 0.0});
      }
    }
  }

  parallel_for(cells.size(), run.threads, [&](std::size_t i) {
    Cell& c = cells[i];
    const SigmaRule rule = rule_of(c.sigma);
    if (c.chain == "type1") {
      const double half = total_db / 2.0;
      const ChainSpec spec({SourceStats::exact(p), SourceStats::exact(p)},
                           {1.0, db_to_efficiency(half + c.split_db / 2.0),
                            db_to_efficiency(half - c.split_db / 2.0), 1.0},
                           rule);
      c.fidelity = bell_fidelity(spec);
    } else if (c.chain == "type2sym") {
      // symmetric double swap: eta2 = eta5, eta3 = eta4, arms split the loss
      const double arm = total_db / 4.0;
      const double e2 = db_to_efficiency(arm + c.split_db / 2.0);
      const double e3 = db_to_efficiency(arm - c.split_db / 2.0);
      const ChainSpec spec(
          {SourceStats::exact(p), SourceStats::exact(p), SourceStats::exact(p)},
          {1.0, e2, e3, e3, e2, 1.0}, rule);
      c.fidelity = bell_fidelity(spec);
    } else {
      // chains of imbalanced links dividing the combined loss evenly
      const double link_db = total_db / c.ell;
      const double e2 = db_to_efficiency(link_db / 2.0 + c.split_db / 2.0);
      const double e3 = db_to_efficiency(link_db / 2.0 - c.split_db / 2.0);
      const auto type = c.chain == "type1a" ? ImbalancedChainType::IA : ImbalancedChainType::IB;
      c.fidelity = bell_fidelity_fast(build_imbalanced_chain(type, c.ell, e2, e3, eta_r, p, rule));
    }
  });

  CsvTable table({"chain", "ell", "split_db", "sigma", "fidelity"});
  for (const Cell& c : cells) {
    table.add_row({c.chain, static_cast<long long>(c.ell), c.split_db,
                   static_cast<long long>(c.sigma), c.fidelity});
  }
  finish(cfg, run, "imbalance-map", table, start, log);
  return 0;
}

int cmd_type2_report(const Config& cfg, const RunOptions& run, std::ostream& log) {
  const auto start = Clock::now();
  const double arm_db = cfg.get_double("type2.arm_db", 20.0);
  const double delta_f = cfg.get_double("type2.delta_f", 0.01);
  const double split_max = cfg.get_double("type2.split_max", 20.0);
  const int steps = cfg.get_int("type2.steps", 41);
  const double alpha = cfg.get_double("type2.alpha", 0.0);
  const bool cascaded = cfg.get_bool("type2.cascaded", false);
  const double multiplexing = cfg.get_double("type2.multiplexing", 1000.0);
  const double cascade_eta_r = cfg.get_double("type2.cascade_eta_r", 0.95);
  const bool worked_example = cfg.get_bool("type2.worked_example", false);
  if (steps < 2) throw std::runtime_error("type2: bad split grid");

  struct Cell {
    double split_a, split_b;
    OperatingPoint op;
    EfficiencyBreakdown eb;
    double gain;
  };
  std::vector<Cell> cells(static_cast<std::size_t>(steps) * steps);
  parallel_for(cells.size(), run.threads, [&](std::size_t idx) {
    Cell& c = cells[idx];
    const int i = static_cast<int>(idx) / steps;
    const int j = static_cast<int>(idx) % steps;
    c.split_a = -split_max + 2.0 * split_max * i / (steps - 1);
    c.split_b = -split_max + 2.0 * split_max * j / (steps - 1);
    Type2Spec s;
    s.eta2 = db_to_efficiency(arm_db / 2.0 - c.split_a / 2.0);
    s.eta3 = db_to_efficiency(arm_db / 2.0 + c.split_a / 2.0);
    s.eta4 = db_to_efficiency(arm_db / 2.0 + c.split_b / 2.0);
    s.eta5 = db_to_efficiency(arm_db / 2.0 - c.split_b / 2.0);
    s.rule = SigmaRule::standard();
    s.alpha_receiver = alpha;
    if (cascaded) {
      s.cascaded = CascadedConfig{multiplexing, cascade_eta_r};
      const auto res = cascaded_operating_point(s, delta_f);
      c.op = res.point;
      c.eb = res.breakdown;
      Type2Spec a = s;
      a.rule = SigmaRule::absm();
      c.gain = cascaded_operating_point(a, delta_f).breakdown.eta_hat_ab / c.eb.eta_hat_ab;
    } else {
      c.op = lagrange_operating_point(s, delta_f);
      c.eb = max_efficiency(s, delta_f);
      c.gain = absm_gain(s.eta2, s.eta3, s.eta4, s.eta5);
    }
  });

  CsvTable table({"split_a_db", "split_b_db", "lambda23", "lambda54", "b", "w", "p12", "p34",
                  "p56", "eta_hat_ab", "pi_hat", "gain_db"});
  double pi_hat_max = 0.0, at_a = 0.0, at_b = 0.0;
  for (const Cell& c : cells) {
    if (c.eb.pi_hat > pi_hat_max) {
      pi_hat_max = c.eb.pi_hat;
      at_a = c.split_a;
      at_b = c.split_b;
    }
    table.add_row({c.split_a, c.split_b, c.op.lambda23, c.op.lambda54, c.op.b, c.op.w, c.op.p12,
                   c.op.p34, c.op.p56, c.eb.eta_hat_ab, c.eb.pi_hat,
                   10.0 * std::log10(c.gain)});
  }

  log << "type2-report: source efficiency coefficients (x df^3): standard "
      << type2_pi0_coefficient(SigmaRule::standard()) << ", alternating "
      << type2_pi0_coefficient(SigmaRule::absm()) << "; single-swap reference (x df^2) "
      << type1_pi0_coefficient() << "\n";
  log << "type2-report: grid max pi_hat = " << pi_hat_max << " at splits (" << at_a << ", "
      << at_b << ") dB\n";
  if (worked_example) {
    const double total_db = cfg.get_double("type2.example_total_db", 40.0);
    const double fid = cfg.get_double("type2.example_fidelity", 0.95);
    const auto rep = fully_imbalanced_penalty(total_db, fid, multiplexing, cascade_eta_r);
    log << "type2-report: fully imbalanced " << total_db << " dB link at fidelity " << fid
        << ": plain double swap " << rep.plain_db << " dB below the balanced single swap; "
        << "cascaded banks reduce this to " << rep.cascaded_standard_db << " dB (standard) / "
        << rep.cascaded_absm_db << " dB (alternating)\n";
  }
  finish(cfg, run, "type2-report", table, start, log);
  return 0;
}

int cmd_verify(const Config& cfg, const RunOptions& run, std::ostream& log) {
  const auto start = Clock::now();
  const int draws = cfg.get_int("verify.draws", 6);
  const std::uint64_t mc_samples =
      static_cast<std::uint64_t>(cfg.get_double("verify.mc_samples", 200000));
  std::mt19937_64 rng(run.seed);
  std::uniform_real_distribution<double> u_eta(0.1, 0.95);
  std::uniform_real_distribution<double> u_p(0.02, 0.2);

  int failures = 0;
  CsvTable table({"check", "status", "deviation"});
  auto report = [&](const std::string& name, bool ok, double detail) {
    log << (ok ? "[ok]   " : "[FAIL] ") << name << " (max deviation " << detail << ")\n";
    table.add_row({name, std::string(ok ? "pass" : "fail"), detail});
    if (!ok) ++failures;
  };

  // per-sequence and aggregate equivalence of calculus and exact traces
  double worst_seq = 0.0, worst_agg = 0.0;
  for (int n : {2, 3}) {
    for (int sigma : {1, 0}) {
      for (int draw = 0; draw < draws; ++draw) {
        std::vector<SourceStats> sources;
        for (int s = 0; s < n; ++s) sources.push_back(SourceStats::exact(u_p(rng)));
        std::vector<double> etas(static_cast<std::size_t>(2 * n), 1.0);
        for (std::size_t c = 1; c + 1 < etas.size(); ++c) etas[c] = u_eta(rng);
        const ChainSpec spec(sources, etas, rule_of(sigma));
        EmissionSequence nu(static_cast<std::size_t>(n), 0);
        while (true) {
          const auto t = fock::sector_trace(spec, nu);
          worst_seq = std::max(worst_seq, std::abs(t.coincidence -
                                                   p_sequence(spec, nu) *
                                                       beta_sequence(spec, nu)));
          int i = 0;
          while (i < n && ++nu[static_cast<std::size_t>(i)] == 3)
            nu[static_cast<std::size_t>(i++)] = 0;
          if (i == n) break;
        }
        const auto full = fock::chain_trace(spec);
        worst_agg = std::max({worst_agg, std::abs(full.eta_bar - coincidence_efficiency(spec)),
                              std::abs(full.eta_bar_ab - terminated_efficiency(spec)),
                              std::abs(full.eta_ab - bell_efficiency(spec))});
      }
    }
  }
  report("per-sequence trace equivalence", worst_seq <= 1e-10, worst_seq);
  report("aggregate efficiency equivalence", worst_agg <= 1e-10, worst_agg);

  // loss commutes with the measurement splitter
  double worst_loss = 0.0;
  {
    fock::ModeRegistry reg(1);
    std::uniform_real_distribution<double> amp(-1.0, 1.0);
    for (int draw = 0; draw < 25; ++draw) {
      fock::SparseKet ket(reg.total_modes());
      for (int n0 = 0; n0 <= 4; ++n0)
        for (int n1 = 0; n0 + n1 <= 4; ++n1) {
          fock::Key k{};
          k.set(reg.signal_a(0), n0);
          k.set(reg.signal_b(0), n1);
          ket.add(k, {amp(rng), amp(rng)});
        }
      worst_loss = std::max(worst_loss, fock::loss_equivalence_deviation(ket, u_eta(rng)));
    }
  }
  report("loss placement equivalence", worst_loss <= 1e-12, worst_loss);

  // diagonal-basis identities of the dual-rail Bell states
  double worst_bell = 0.0;
  {
    fock::ModeRegistry reg(2);
    auto dist = [&](const fock::SparseKet& x, const fock::SparseKet& y, double sign) {
      double worst = 0.0;
      for (const auto& [k, a] : x.amplitudes()) {
        auto it = y.amplitudes().find(k);
        const auto b = it == y.amplitudes().end() ? fock::Complex{} : it->second;
        worst = std::max(worst, std::abs(a - sign * b));
      }
      return worst;
    };
    using fock::bell_state;
    using B = fock::BsmBasis;
    worst_bell = std::max(worst_bell, dist(bell_state(reg, 0, 1, 'p', +1),
                                           bell_state(reg, 0, 1, 'f', -1, B::diagonal), 1.0));
    worst_bell = std::max(worst_bell, dist(bell_state(reg, 0, 1, 'f', +1),
                                           bell_state(reg, 0, 1, 'f', +1, B::diagonal), 1.0));
    worst_bell = std::max(worst_bell, dist(bell_state(reg, 0, 1, 'p', -1),
                                           bell_state(reg, 0, 1, 'p', -1, B::diagonal), -1.0));
    worst_bell = std::max(worst_bell, dist(bell_state(reg, 0, 1, 'f', -1),
                                           bell_state(reg, 0, 1, 'p', +1, B::diagonal), 1.0));
  }
  report("bell basis mapping", worst_bell <= 1e-12, worst_bell);

  // four-photon correlation: opposite detection leaves a diagonal-basis
  // two-photon state with no mixed component in the partner channel
  double noon = 0.0;
  {
    fock::ModeRegistry reg(2);
    auto four = fock::source_component(SourceStats::exact(0.1), 2, reg, 0, 1);
    fock::SparseKet kept(four.mode_count());
    for (const auto& [k, a] : four.amplitudes())
      if (k.get(reg.signal_a(0)) == 1 && k.get(reg.signal_b(0)) == 1) kept.add(k, a);
    rotate_to_diagonal(kept, reg, 1);
    for (const auto& [k, a] : kept.amplitudes())
      if (k.get(reg.signal_a(1)) == 1 && k.get(reg.signal_b(1)) == 1)
        noon += std::norm(a);
  }
  report("four-photon correlation", noon <= 1e-12, noon);

  // seeded sampling against the exact trace
  {
    std::vector<SourceStats> sources = {SourceStats::exact(0.1), SourceStats::exact(0.15),
                                        SourceStats::exact(0.08)};
    const ChainSpec spec(sources, {1, 0.7, 0.5, 0.6, 0.8, 1}, SigmaRule::standard());
    const auto est = fock::monte_carlo_cross_check(spec, mc_samples, run.seed);
    const double exact = fock::chain_trace(spec).eta_bar;
    const double pull = std::abs(est.eta_bar - exact) / est.std_error;
    report("monte-carlo cross check", pull <= 4.0, pull);
  }

  finish(cfg, run, "verify", table, start, log);
  log << (failures == 0 ? "verify: all checks passed\n"
                        : "verify: " + std::to_string(failures) + " check(s) failed\n");
  return failures == 0 ? 0 : 2;
}

}  // namespace swapcalc::cli
