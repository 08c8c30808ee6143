// busod command line: synthesize journeys, fit the sampler, run IPF
// baselines, evaluate estimates and aggregate to periods.
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <string>

#include "busod/baselines.hpp"
#include "busod/evaluation.hpp"
#include "busod/io.hpp"
#include "busod/param_sampler.hpp"
#include "busod/synthesis.hpp"

namespace {

using namespace busod;

std::vector<double> parse_rate_list(const std::string& csv) {
  std::vector<double> rates;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const auto comma = csv.find(',', start);
    const std::string field =
        comma == std::string::npos ? csv.substr(start) : csv.substr(start, comma - start);
    rates.push_back(std::stod(field));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return rates;
}

std::vector<TimeWindow> parse_periods(const std::string& text) {
  // "start-end,start-end,..." in seconds.
  std::vector<TimeWindow> periods;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string field =
        comma == std::string::npos ? text.substr(start) : text.substr(start, comma - start);
    const auto dash = field.find('-');
    if (dash == std::string::npos)
      throw CLI::ValidationError("--periods", "expected start-end pairs, got '" + field + "'");
    periods.push_back({std::stod(field.substr(0, dash)), std::stod(field.substr(dash + 1))});
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return periods;
}

int run_synth(int stops, int n_trips, int rank, double headway, double start_s,
              const std::string& rates_csv, double total_boardings, double lengthscale,
              double jitter_s, std::uint64_t seed, const std::string& out_trips,
              const std::string& out_truth) {
  SynthConfig cfg;
  cfg.route.stops = stops;
  cfg.n_trips = n_trips;
  cfg.rank = rank;
  cfg.headway_seconds = headway;
  cfg.service_start_s = start_s;
  cfg.headway_jitter_s = jitter_s;
  cfg.kernel.lengthscale = lengthscale;
  cfg.prior.kernel.lengthscale = lengthscale;
  if (!rates_csv.empty()) {
    cfg.boarding_profile = parse_rate_list(rates_csv);
  } else {
    // Declining profile scaled to the requested boardings per trip.
    cfg.boarding_profile.assign(static_cast<std::size_t>(stops), 0.0);
    double weight_sum = 0.0;
    for (int i = 0; i < stops - 1; ++i) weight_sum += static_cast<double>(stops - 1 - i);
    for (int i = 0; i < stops - 1; ++i)
      cfg.boarding_profile[static_cast<std::size_t>(i)] =
          total_boardings * static_cast<double>(stops - 1 - i) / weight_sum;
  }

  Rng rng = make_stream(seed, 0x53594e5448ULL);  // "SYNTH"
  const SynthResult result = synthesize(cfg, rng);
  write_trips(result.data, out_trips);
  write_truth(result.truth, result.data, out_truth);
  std::cout << "synthesized " << result.data.n_trips() << " trips over " << stops << " stops ("
            << out_trips << ", " << out_truth << ")\n";
  return 0;
}

int run_fit(RunConfig cfg) {
  const Dataset data = read_trips(cfg.trips_path);

  std::unique_ptr<std::ofstream> diag_file;
  std::ostream* diag = nullptr;
  if (cfg.diagnostics == "-") {
    diag = &std::cerr;
  } else if (!cfg.diagnostics.empty()) {
    diag_file = std::make_unique<std::ofstream>(cfg.diagnostics);
    if (!*diag_file) throw IoError(cfg.diagnostics + ": cannot open for writing");
    diag = diag_file.get();
  }
  if (diag) *diag << "sweep,loglik,od_accept_rate,rho\n" << std::flush;

  auto on_sweep = [&](const SweepRecord& r) {
    if (!diag) return;
    *diag << r.sweep << ',' << format_double(r.loglik) << ',' << format_double(r.od_accept_rate)
          << ',' << format_double(r.rho) << '\n'
          << std::flush;
  };

  const PosteriorSamples samples = run_gibbs(data, cfg.prior, cfg.chain, on_sweep);
  const PosteriorSummary summary = posterior_od_summary(samples);
  write_posterior_summary(summary, cfg.out_summary);
  if (!cfg.out_draws.empty()) write_od_draws(samples, cfg.out_draws);
  if (!cfg.out_lambda_draws.empty()) write_lambda_draws(samples, cfg.out_lambda_draws);
  std::cout << "fit " << data.n_trips() << " trips, retained " << samples.n_draws()
            << " draws -> " << cfg.out_summary << "\n";
  return 0;
}

int run_ipf(const std::string& trips_path, const std::string& truth_path, int picks,
            std::uint64_t seed, const std::string& periods_text, const std::string& out_path,
            const std::string& aggregated_out) {
  const Dataset data = read_trips(trips_path);
  const std::vector<ODVector> truth = align_truth(read_truth(truth_path), data);
  const std::vector<TimeWindow> periods =
      periods_text.empty() ? default_periods() : parse_periods(periods_text);

  Rng rng = make_stream(seed, 0x495046ULL);  // "IPF"
  std::vector<Eigen::MatrixXd> seeds = build_seed(truth, data, periods, picks, rng);
  for (auto& seed_matrix : seeds)
    seed_matrix = add_structural_offset(seed_matrix, data.route, 0.01);

  if (!out_path.empty()) {
    // Journey-level IPF: each trip fitted against its period's seed. Trips
    // outside every window fall back to the mean of the period seeds.
    Eigen::MatrixXd fallback = Eigen::MatrixXd::Zero(data.route.stops, data.route.stops);
    for (const auto& s : seeds) fallback += s;
    fallback /= static_cast<double>(seeds.size());

    std::vector<std::vector<double>> estimates;
    std::vector<std::string> ids;
    for (const auto& trip : data.trips) {
      const Eigen::MatrixXd* seed_matrix = &fallback;
      for (std::size_t p = 0; p < periods.size(); ++p)
        if (periods[p].contains(trip.departure_s)) {
          seed_matrix = &seeds[p];
          break;
        }
      Eigen::VectorXd u(data.route.stops), v(data.route.stops);
      for (int i = 0; i < data.route.stops; ++i) {
        u[i] = trip.boardings[static_cast<std::size_t>(i)];
        v[i] = trip.alightings[static_cast<std::size_t>(i)];
      }
      const IpfResult fitted = ipf(*seed_matrix, u, v);
      if (!fitted.converged)
        std::cerr << "warning: IPF did not converge for trip '" << trip.trip_id << "' (max change "
                  << fitted.max_change << ")\n";
      estimates.push_back(od_matrix_to_vector(fitted.matrix, data.route));
      ids.push_back(trip.trip_id);
    }
    write_estimates(estimates, ids, data.route, out_path);
    std::cout << "journey-level IPF for " << data.n_trips() << " trips -> " << out_path << "\n";
  }

  if (!aggregated_out.empty()) {
    const std::vector<IpfResult> fitted = aggregated_ipf(data, periods, seeds);
    std::vector<Eigen::MatrixXd> matrices;
    for (const auto& r : fitted) matrices.push_back(r.matrix);
    write_period_matrices(matrices, periods, data.route, aggregated_out);
    std::cout << "aggregated IPF over " << periods.size() << " periods -> " << aggregated_out
              << "\n";
  }
  return 0;
}

int run_eval(const std::string& trips_path, const std::string& truth_path,
             const std::string& estimates_path, const std::string& summary_path,
             const std::string& draws_path, const std::string& lambda_path,
             const std::string& out_path) {
  const Dataset data = read_trips(trips_path);
  const std::vector<ODVector> truth = align_truth(read_truth(truth_path), data);

  std::vector<double> truth_flat;
  for (const auto& y : truth)
    for (const int c : y.counts) truth_flat.push_back(c);

  std::vector<std::pair<std::string, double>> metrics;

  if (!estimates_path.empty()) {
    const auto estimates = align_estimates(read_estimates(estimates_path), data);
    std::vector<double> est_flat;
    for (const auto& row : estimates)
      for (const double v : row) est_flat.push_back(v);
    metrics.emplace_back("rmse_estimates", rmse(truth_flat, est_flat));
  }

  if (!summary_path.empty()) {
    const PosteriorSummary summary = read_posterior_summary(summary_path);
    if (summary.trip_ids.size() != data.trips.size())
      throw IoError("posterior summary covers a different trip set");
    std::vector<double> mean_flat;
    for (const auto& trip : summary.trips)
      for (const auto& e : trip) mean_flat.push_back(e.mean);
    metrics.emplace_back("rmse_posterior_mean", rmse(truth_flat, mean_flat));
    metrics.emplace_back("coverage_95", interval_coverage(summary, truth));
  }

  if (!draws_path.empty()) {
    const OdDrawStore store = read_od_draws(draws_path);
    if (store.n_trips != data.n_trips() || store.route.stops != data.route.stops)
      throw IoError("draw store does not match the trip file");
    double total = 0.0;
    long count = 0;
    std::vector<double> samples(store.draws.size());
    for (int n = 0; n < store.n_trips; ++n)
      for (int k = 0; k < store.route.od_pairs(); ++k) {
        for (std::size_t d = 0; d < store.draws.size(); ++d)
          samples[d] = store.draws[d][static_cast<std::size_t>(n)][k];
        total += crps_samples(samples, truth[static_cast<std::size_t>(n)][k]);
        ++count;
      }
    metrics.emplace_back("crps_mean", total / static_cast<double>(count));
  }

  if (!lambda_path.empty()) {
    const LambdaDrawStore store = read_lambda_draws(lambda_path);
    if (store.n_trips != data.n_trips() || store.route.stops != data.route.stops)
      throw IoError("lambda draw store does not match the trip file");
    const std::vector<double> lls = od_loglik_under_lambda(truth, data, store.draws);
    const MeanSd ms = mean_sd(lls);
    metrics.emplace_back("loglik_mean", ms.mean);
    metrics.emplace_back("loglik_sd", ms.sd);
  }

  if (metrics.empty())
    throw IoError("nothing to evaluate: pass --estimates, --summary, --draws or --lambda-draws");
  write_metrics(metrics, out_path);
  for (const auto& [name, value] : metrics) std::cout << name << " = " << value << "\n";
  return 0;
}

int run_aggregate(const std::string& trips_path, const std::string& estimates_path,
                  const std::string& periods_text, const std::string& out_path) {
  const Dataset data = read_trips(trips_path);
  const auto estimates = align_estimates(read_estimates(estimates_path), data);
  const std::vector<TimeWindow> periods =
      periods_text.empty() ? default_periods() : parse_periods(periods_text);

  std::vector<Eigen::MatrixXd> matrices;
  matrices.reserve(estimates.size());
  for (const auto& row : estimates) matrices.push_back(od_vector_to_matrix(row, data.route));

  const PeriodAggregate agg = aggregate_periods(matrices, data, periods);
  for (const int n : agg.unassigned_trips)
    std::cerr << "warning: trip '" << data.trips[static_cast<std::size_t>(n)].trip_id
              << "' falls outside every period\n";
  write_period_matrices(agg.hourly, periods, data.route, out_path);
  std::cout << "aggregated " << (estimates.size() - agg.unassigned_trips.size()) << " trips into "
            << periods.size() << " periods -> " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"journey-level bus origin-destination inference from boarding/alighting counts"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  int threads = 1;
  std::string config_path;
  app.add_option("--seed", seed, "master random seed");
  app.add_option("--threads", threads, "worker threads (1 = fully sequential)");
  app.add_option("--config", config_path, "JSON run configuration");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset with ground truth");
  int stops = 8, n_trips = 120, rank = 2;
  double headway = 480.0, start_s = 7 * 3600.0, total_boardings = 30.0, lengthscale = 3600.0,
         jitter_s = 0.0;
  std::string rates_csv, out_trips = "trips.csv", out_truth = "truth.csv";
  synth->add_option("--stops", stops, "number of stops S")->check(CLI::Range(2, 1000));
  synth->add_option("--trips", n_trips, "number of journeys")->check(CLI::PositiveNumber);
  synth->add_option("--rank", rank, "latent rank D")->check(CLI::PositiveNumber);
  synth->add_option("--headway-s", headway, "headway between departures, seconds");
  synth->add_option("--start-s", start_s, "first departure, epoch-relative seconds");
  synth->add_option("--boarding-rates", rates_csv,
                    "comma list of per-stop Poisson boarding rates (last must be 0)");
  synth->add_option("--total-boardings", total_boardings,
                    "mean boardings per trip for the default declining profile");
  synth->add_option("--lengthscale-s", lengthscale, "GP kernel lengthscale, seconds");
  synth->add_option("--headway-jitter-s", jitter_s, "uniform departure jitter, seconds");
  synth->add_option("--out-trips", out_trips, "output trip CSV");
  synth->add_option("--out-truth", out_truth, "output truth CSV");

  // fit
  auto* fit = app.add_subcommand("fit", "run the Metropolis-within-Gibbs sampler");
  std::string trips_path, out_summary = "posterior_summary.csv", out_draws, out_lambda, diag;
  std::string preset = "desk";
  int burn_in = -1, retained = -1, thin = -1, fit_rank = -1;
  bool static_model = false;
  fit->add_option("--trips", trips_path, "trip CSV");
  fit->add_option("--out-summary", out_summary, "posterior summary CSV");
  fit->add_option("--out-draws", out_draws, "binary OD draw store");
  fit->add_option("--out-lambda-draws", out_lambda, "binary lambda draw store");
  fit->add_option("--diagnostics", diag, "per-sweep CSV stream ('-' = stderr)");
  fit->add_option("--preset", preset, "chain preset: desk (4000/1000) or paper (95000/5000)")
      ->check(CLI::IsMember({"desk", "paper"}));
  fit->add_option("--burn-in", burn_in, "override burn-in sweeps M1");
  fit->add_option("--retained", retained, "override retained sweeps M2");
  fit->add_option("--thin", thin, "override thinning stride");
  fit->add_option("--rank", fit_rank, "override latent rank D");
  fit->add_flag("--static", static_model, "static variant: rank 1, Psi frozen at ones");

  // ipf
  auto* ipf_cmd = app.add_subcommand("ipf", "IPF baselines from period-averaged true seeds");
  std::string ipf_trips, ipf_truth, ipf_out, ipf_agg_out, periods_text;
  int picks = 3;
  ipf_cmd->add_option("--trips", ipf_trips, "trip CSV")->required();
  ipf_cmd->add_option("--truth", ipf_truth, "truth CSV (seed source)")->required();
  ipf_cmd->add_option("--picks", picks, "true matrices averaged per period seed");
  ipf_cmd->add_option("--periods", periods_text, "periods as start-end[,start-end...] seconds");
  ipf_cmd->add_option("--out", ipf_out, "journey-level estimates CSV");
  ipf_cmd->add_option("--aggregated-out", ipf_agg_out, "per-period aggregated IPF CSV");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score estimates against ground truth");
  std::string ev_trips, ev_truth, ev_estimates, ev_summary, ev_draws, ev_lambda,
      ev_out = "metrics.csv";
  eval_cmd->add_option("--trips", ev_trips, "trip CSV")->required();
  eval_cmd->add_option("--truth", ev_truth, "truth CSV")->required();
  eval_cmd->add_option("--estimates", ev_estimates, "point estimates CSV (e.g. IPF)");
  eval_cmd->add_option("--summary", ev_summary, "posterior summary CSV");
  eval_cmd->add_option("--draws", ev_draws, "binary OD draw store (enables CRPS)");
  eval_cmd->add_option("--lambda-draws", ev_lambda, "binary lambda store (enables log-likelihood)");
  eval_cmd->add_option("--out", ev_out, "metrics CSV");

  // aggregate
  auto* agg_cmd = app.add_subcommand("aggregate", "hourly-average period matrices from estimates");
  std::string ag_trips, ag_estimates, ag_periods, ag_out = "period_matrices.csv";
  agg_cmd->add_option("--trips", ag_trips, "trip CSV")->required();
  agg_cmd->add_option("--estimates", ag_estimates, "per-trip estimates CSV")->required();
  agg_cmd->add_option("--periods", ag_periods, "periods as start-end[,start-end...] seconds");
  agg_cmd->add_option("--out", ag_out, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return run_synth(stops, n_trips, rank, headway, start_s, rates_csv, total_boardings,
                       lengthscale, jitter_s, seed, out_trips, out_truth);
    if (fit->parsed()) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = read_run_config(config_path);
      if (preset == "paper") {
        const auto keep = cfg.chain;
        cfg.chain = ChainConfig::paper_scale();
        cfg.chain.seed = keep.seed;
        cfg.chain.rank = keep.rank;
        cfg.chain.threads = keep.threads;
      }
      if (!trips_path.empty()) cfg.trips_path = trips_path;
      if (fit->count("--out-summary") || cfg.out_summary.empty()) cfg.out_summary = out_summary;
      if (!out_draws.empty()) cfg.out_draws = out_draws;
      if (!out_lambda.empty()) cfg.out_lambda_draws = out_lambda;
      if (!diag.empty()) cfg.diagnostics = diag;
      if (burn_in >= 0) cfg.chain.burn_in = burn_in;
      if (retained >= 0) cfg.chain.retained = retained;
      if (thin >= 1) cfg.chain.thin = thin;
      if (fit_rank >= 1) cfg.chain.rank = fit_rank;
      if (static_model) cfg.chain = static_model_config(cfg.chain);
      if (app.count("--seed")) cfg.chain.seed = seed;
      if (app.count("--threads")) cfg.chain.threads = threads;
      if (cfg.trips_path.empty())
        throw IoError("fit needs a trip file (--trips or io.trips in the config)");
      return run_fit(std::move(cfg));
    }
    if (ipf_cmd->parsed()) {
      if (ipf_out.empty() && ipf_agg_out.empty())
        throw IoError("ipf needs --out and/or --aggregated-out");
      return run_ipf(ipf_trips, ipf_truth, picks, seed, periods_text, ipf_out, ipf_agg_out);
    }
    if (eval_cmd->parsed())
      return run_eval(ev_trips, ev_truth, ev_estimates, ev_summary, ev_draws, ev_lambda, ev_out);
    if (agg_cmd->parsed()) return run_aggregate(ag_trips, ag_estimates, ag_periods, ag_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
