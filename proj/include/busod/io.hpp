// File formats and run configuration. Layouts are frozen in docs/FORMATS.md.
//
// CSV files use plain comma separation (no quoting; trip ids must not contain
// commas), doubles are written with 17 significant digits so writer/reader
// pairs round-trip losslessly, and all times are epoch-relative seconds.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "busod/baselines.hpp"
#include "busod/param_sampler.hpp"
#include "busod/route_model.hpp"

namespace busod {

// Raised for malformed files and failed validation; the message carries the
// path and, for parse errors, the line number.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  PriorSpec prior{};
  ChainConfig chain{};
  std::vector<TimeWindow> periods = default_periods();
  std::string trips_path;
  std::string out_summary;
  std::string out_draws;         // optional binary OD draw store
  std::string out_lambda_draws;  // optional binary lambda draw store
  std::string diagnostics;       // optional per-sweep stream ("-" = stderr)
};

// JSON configuration document; missing fields keep their defaults.
RunConfig read_run_config(const std::string& path);

// Trip CSV: trip_id,departure_epoch_s,stop_index,boardings,alightings with
// stops 1..S contiguous per trip. Every trip is validated and the dataset is
// returned sorted by departure time.
Dataset read_trips(const std::string& path);
void write_trips(const Dataset& data, const std::string& path);

// Truth CSV: trip_id,origin,destination,count (1-based stops, all M pairs).
struct TruthTable {
  RouteConfig route;
  std::vector<std::string> trip_ids;
  std::vector<ODVector> od;
};
TruthTable read_truth(const std::string& path);
void write_truth(const std::vector<ODVector>& truth, const Dataset& data,
                 const std::string& path);

// Reorders `truth` to match the dataset's trips; throws IoError when a trip
// is missing from the table.
std::vector<ODVector> align_truth(const TruthTable& truth, const Dataset& data);

// Real-valued per-trip estimates CSV: trip_id,origin,destination,value.
struct EstimateTable {
  RouteConfig route;
  std::vector<std::string> trip_ids;
  std::vector<std::vector<double>> values;  // flat OD order
};
EstimateTable read_estimates(const std::string& path);
void write_estimates(const std::vector<std::vector<double>>& values,
                     const std::vector<std::string>& trip_ids, const RouteConfig& route,
                     const std::string& path);
std::vector<std::vector<double>> align_estimates(const EstimateTable& table, const Dataset& data);

// Posterior summary CSV: trip_id,origin,destination,mean,sd,q025,q975.
void write_posterior_summary(const PosteriorSummary& summary, const std::string& path);
PosteriorSummary read_posterior_summary(const std::string& path);

// Flat little-endian OD draw store ('ODDRAWS1'): header with S, N, M and the
// draw count, then n_draws x N x M int32 counts in draw-major order.
void write_od_draws(const PosteriorSamples& samples, const std::string& path);
struct OdDrawStore {
  RouteConfig route;
  int n_trips = 0;
  std::vector<std::vector<ODVector>> draws;  // [draw][trip]
};
OdDrawStore read_od_draws(const std::string& path);

// Same layout with float64 payload for lambda tables ('ODLAMBD1').
void write_lambda_draws(const PosteriorSamples& samples, const std::string& path);
struct LambdaDrawStore {
  RouteConfig route;
  int n_trips = 0;
  std::vector<std::vector<LambdaTable>> draws;  // [draw][trip]
};
LambdaDrawStore read_lambda_draws(const std::string& path);

// Period matrices CSV:
// period_index,period_start_s,period_end_s,origin,destination,value.
void write_period_matrices(const std::vector<Eigen::MatrixXd>& matrices,
                           const std::vector<TimeWindow>& periods, const RouteConfig& route,
                           const std::string& path);

// Metrics CSV: metric,value.
void write_metrics(const std::vector<std::pair<std::string, double>>& metrics,
                   const std::string& path);

// 17-significant-digit representation; round-trips double values exactly.
std::string format_double(double x);

}  // namespace busod
