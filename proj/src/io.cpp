#include "busod/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace busod {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void fail(const std::string& path, std::size_t line_no, const std::string& what) {
  throw IoError(path + ":" + std::to_string(line_no) + ": " + what);
}

double parse_double(const std::string& path, std::size_t line_no, const std::string& field) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size()) fail(path, line_no, "trailing characters in number '" + field + "'");
    return v;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception&) {
    fail(path, line_no, "cannot parse number '" + field + "'");
  }
}

long parse_long(const std::string& path, std::size_t line_no, const std::string& field) {
  try {
    std::size_t used = 0;
    const long v = std::stol(field, &used);
    if (used != field.size()) fail(path, line_no, "trailing characters in integer '" + field + "'");
    return v;
  } catch (const IoError&) {
    throw;
  } catch (const std::exception&) {
    fail(path, line_no, "cannot parse integer '" + field + "'");
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios_base::openmode mode = std::ios_base::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError(path + ": cannot open for writing");
  return out;
}

void check_header(const std::string& path, std::istream& in, const std::string& expected) {
  std::string line;
  if (!std::getline(in, line)) fail(path, 1, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected) fail(path, 1, "unexpected header '" + line + "', expected '" + expected + "'");
}

// Rows keyed by (trip, origin, destination); shared by truth/estimate readers.
template <typename Value, typename ParseValue>
void read_od_table(const std::string& path, const std::string& header,
                   std::vector<std::string>& trip_ids, std::vector<std::vector<Value>>& rows,
                   RouteConfig& route, ParseValue&& parse_value) {
  auto in = open_in(path);
  check_header(path, in, header);

  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::tuple<int, int, Value>>> cells;
  int max_stop = 0;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 4) fail(path, line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    const int origin = static_cast<int>(parse_long(path, line_no, fields[1]));
    const int dest = static_cast<int>(parse_long(path, line_no, fields[2]));
    if (origin < 1 || dest <= origin)
      fail(path, line_no, "need 1 <= origin < destination, got " + fields[1] + "," + fields[2]);
    const Value value = parse_value(path, line_no, fields[3]);
    auto [it, inserted] = index.try_emplace(fields[0], trip_ids.size());
    if (inserted) {
      trip_ids.push_back(fields[0]);
      cells.emplace_back();
    }
    cells[it->second].emplace_back(origin, dest, value);
    max_stop = std::max(max_stop, dest);
  }
  if (trip_ids.empty()) fail(path, line_no, "no data rows");

  route.stops = max_stop;
  const int m = route.od_pairs();
  rows.assign(trip_ids.size(), std::vector<Value>(static_cast<std::size_t>(m), Value{}));
  for (std::size_t n = 0; n < cells.size(); ++n) {
    if (cells[n].size() != static_cast<std::size_t>(m))
      throw IoError(path + ": trip '" + trip_ids[n] + "' has " + std::to_string(cells[n].size()) +
                    " OD rows, expected " + std::to_string(m));
    for (const auto& [origin, dest, value] : cells[n])
      rows[n][static_cast<std::size_t>(od_flat_index(route.stops, origin - 1, dest - 1))] = value;
  }
}

void write_binary(std::ofstream& out, const void* data, std::size_t bytes) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

template <typename T>
T read_scalar(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw IoError(path + ": truncated draw store");
  return value;
}

struct DrawHeader {
  RouteConfig route;
  std::uint32_t n_trips = 0;
  std::uint64_t n_draws = 0;
};

void write_draw_header(std::ofstream& out, const char* magic, const RouteConfig& route,
                       std::size_t n_trips, std::size_t n_draws) {
  write_binary(out, magic, 8);
  const std::uint32_t version = 1;
  const std::uint32_t s = static_cast<std::uint32_t>(route.stops);
  const std::uint32_t n = static_cast<std::uint32_t>(n_trips);
  const std::uint32_t m = static_cast<std::uint32_t>(route.od_pairs());
  const std::uint64_t d = n_draws;
  write_binary(out, &version, 4);
  write_binary(out, &s, 4);
  write_binary(out, &n, 4);
  write_binary(out, &m, 4);
  write_binary(out, &d, 8);
}

DrawHeader read_draw_header(std::istream& in, const std::string& path, const char* magic) {
  char got[8];
  if (!in.read(got, 8)) throw IoError(path + ": truncated draw store");
  if (std::memcmp(got, magic, 8) != 0)
    throw IoError(path + ": bad magic, not a " + std::string(magic, 8) + " file");
  const auto version = read_scalar<std::uint32_t>(in, path);
  if (version != 1) throw IoError(path + ": unsupported version " + std::to_string(version));
  DrawHeader h;
  h.route.stops = static_cast<int>(read_scalar<std::uint32_t>(in, path));
  h.n_trips = read_scalar<std::uint32_t>(in, path);
  const auto m = read_scalar<std::uint32_t>(in, path);
  if (h.route.stops < 2 || m != static_cast<std::uint32_t>(h.route.od_pairs()))
    throw IoError(path + ": inconsistent header dimensions");
  h.n_draws = read_scalar<std::uint64_t>(in, path);
  return h;
}

}  // namespace

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

RunConfig read_run_config(const std::string& path) {
  auto in = open_in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  RunConfig cfg;
  try {
    if (doc.contains("prior")) {
      const auto& p = doc["prior"];
      cfg.prior.mu_rho = p.value("mu_rho", cfg.prior.mu_rho);
      cfg.prior.sigma2_rho = p.value("sigma2_rho", cfg.prior.sigma2_rho);
      cfg.prior.sigma2_phi = p.value("sigma2_phi", cfg.prior.sigma2_phi);
    }
    if (doc.contains("kernel")) {
      const auto& k = doc["kernel"];
      cfg.prior.kernel.sigma = k.value("sigma", cfg.prior.kernel.sigma);
      cfg.prior.kernel.lengthscale = k.value("lengthscale_s", cfg.prior.kernel.lengthscale);
      cfg.prior.kernel.jitter = k.value("jitter", cfg.prior.kernel.jitter);
    }
    if (doc.contains("chain")) {
      const auto& c = doc["chain"];
      cfg.chain.burn_in = c.value("burn_in", cfg.chain.burn_in);
      cfg.chain.retained = c.value("retained", cfg.chain.retained);
      cfg.chain.thin = c.value("thin", cfg.chain.thin);
      cfg.chain.od_steps_per_sweep = c.value("od_steps_per_sweep", cfg.chain.od_steps_per_sweep);
      cfg.chain.slice_width_rho = c.value("slice_width_rho", cfg.chain.slice_width_rho);
      cfg.chain.seed = c.value("seed", cfg.chain.seed);
      cfg.chain.rank = c.value("rank", cfg.chain.rank);
      cfg.chain.threads = c.value("threads", cfg.chain.threads);
      cfg.chain.freeze_psi_ones = c.value("static_model", cfg.chain.freeze_psi_ones);
    }
    if (doc.contains("periods")) {
      cfg.periods.clear();
      for (const auto& w : doc["periods"]) {
        if (!w.is_array() || w.size() != 2)
          throw IoError(path + ": each period must be [start_s, end_s]");
        cfg.periods.push_back({w[0].get<double>(), w[1].get<double>()});
      }
    }
    if (doc.contains("io")) {
      const auto& io = doc["io"];
      cfg.trips_path = io.value("trips", cfg.trips_path);
      cfg.out_summary = io.value("out_summary", cfg.out_summary);
      cfg.out_draws = io.value("out_draws", cfg.out_draws);
      cfg.out_lambda_draws = io.value("out_lambda_draws", cfg.out_lambda_draws);
      cfg.diagnostics = io.value("diagnostics", cfg.diagnostics);
    }
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return cfg;
}

Dataset read_trips(const std::string& path) {
  auto in = open_in(path);
  check_header(path, in, "trip_id,departure_epoch_s,stop_index,boardings,alightings");

  Dataset data;
  TripObservation current;
  int expected_stop = 1;
  int stops = 0;
  auto finish_trip = [&](std::size_t line_no) {
    if (current.trip_id.empty()) return;
    if (stops == 0) {
      stops = static_cast<int>(current.boardings.size());
      if (stops < 2) fail(path, line_no, "trips need at least 2 stops");
    } else if (static_cast<int>(current.boardings.size()) != stops) {
      fail(path, line_no,
           "trip '" + current.trip_id + "' has " + std::to_string(current.boardings.size()) +
               " stops, expected " + std::to_string(stops));
    }
    const auto verdict = validate_observation(current);
    if (!verdict.ok())
      throw IoError(path + ": trip '" + current.trip_id + "' is invalid: " + verdict.describe());
    data.trips.push_back(std::move(current));
    current = TripObservation{};
    expected_stop = 1;
  };

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 5) fail(path, line_no, "expected 5 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) fail(path, line_no, "empty trip_id");
    if (fields[0] != current.trip_id) {
      finish_trip(line_no);
      current.trip_id = fields[0];
      current.departure_s = parse_double(path, line_no, fields[1]);
    }
    const int stop = static_cast<int>(parse_long(path, line_no, fields[2]));
    if (stop != expected_stop)
      fail(path, line_no, "trip '" + fields[0] + "': expected stop " +
                              std::to_string(expected_stop) + ", got " + std::to_string(stop));
    ++expected_stop;
    current.boardings.push_back(static_cast<int>(parse_long(path, line_no, fields[3])));
    current.alightings.push_back(static_cast<int>(parse_long(path, line_no, fields[4])));
  }
  finish_trip(line_no);
  if (data.trips.empty()) fail(path, line_no, "no trips");

  data.route.stops = stops;
  std::stable_sort(data.trips.begin(), data.trips.end(),
                   [](const TripObservation& a, const TripObservation& b) {
                     return a.departure_s < b.departure_s;
                   });
  return data;
}

void write_trips(const Dataset& data, const std::string& path) {
  auto out = open_out(path);
  out << "trip_id,departure_epoch_s,stop_index,boardings,alightings\n";
  for (const auto& trip : data.trips)
    for (int i = 0; i < data.route.stops; ++i)
      out << trip.trip_id << ',' << format_double(trip.departure_s) << ',' << (i + 1) << ','
          << trip.boardings[static_cast<std::size_t>(i)] << ','
          << trip.alightings[static_cast<std::size_t>(i)] << '\n';
  if (!out) throw IoError(path + ": write failed");
}

TruthTable read_truth(const std::string& path) {
  TruthTable table;
  std::vector<std::vector<int>> rows;
  read_od_table<int>(path, "trip_id,origin,destination,count", table.trip_ids, rows, table.route,
                     [](const std::string& p, std::size_t ln, const std::string& f) {
                       const long v = parse_long(p, ln, f);
                       if (v < 0) fail(p, ln, "negative count");
                       return static_cast<int>(v);
                     });
  table.od.reserve(rows.size());
  for (auto& row : rows) table.od.push_back(ODVector{std::move(row)});
  return table;
}

void write_truth(const std::vector<ODVector>& truth, const Dataset& data,
                 const std::string& path) {
  if (truth.size() != data.trips.size()) throw IoError(path + ": truth/trip count mismatch");
  auto out = open_out(path);
  out << "trip_id,origin,destination,count\n";
  const int s = data.route.stops;
  for (std::size_t n = 0; n < truth.size(); ++n)
    for (int i = 0; i < s - 1; ++i)
      for (int j = i + 1; j < s; ++j)
        out << data.trips[n].trip_id << ',' << (i + 1) << ',' << (j + 1) << ','
            << truth[n][od_flat_index(s, i, j)] << '\n';
  if (!out) throw IoError(path + ": write failed");
}

std::vector<ODVector> align_truth(const TruthTable& truth, const Dataset& data) {
  if (truth.route.stops > data.route.stops)
    throw IoError("truth table uses more stops than the trip file");
  std::map<std::string, std::size_t> index;
  for (std::size_t n = 0; n < truth.trip_ids.size(); ++n) index[truth.trip_ids[n]] = n;
  std::vector<ODVector> out;
  out.reserve(data.trips.size());
  for (const auto& trip : data.trips) {
    const auto it = index.find(trip.trip_id);
    if (it == index.end()) throw IoError("trip '" + trip.trip_id + "' missing from truth table");
    ODVector y = truth.od[it->second];
    y.counts.resize(static_cast<std::size_t>(data.route.od_pairs()), 0);
    if (truth.route.stops != data.route.stops) {
      // Re-spread entries if the truth file inferred a smaller S (possible
      // when the last stops never receive passengers).
      ODVector spread;
      spread.counts.assign(static_cast<std::size_t>(data.route.od_pairs()), 0);
      for (int i = 0; i < truth.route.stops - 1; ++i)
        for (int j = i + 1; j < truth.route.stops; ++j)
          spread[od_flat_index(data.route.stops, i, j)] =
              truth.od[it->second][od_flat_index(truth.route.stops, i, j)];
      y = std::move(spread);
    }
    out.push_back(std::move(y));
  }
  return out;
}

EstimateTable read_estimates(const std::string& path) {
  EstimateTable table;
  read_od_table<double>(path, "trip_id,origin,destination,value", table.trip_ids, table.values,
                        table.route, [](const std::string& p, std::size_t ln, const std::string& f) {
                          return parse_double(p, ln, f);
                        });
  return table;
}

void write_estimates(const std::vector<std::vector<double>>& values,
                     const std::vector<std::string>& trip_ids, const RouteConfig& route,
                     const std::string& path) {
  if (values.size() != trip_ids.size()) throw IoError(path + ": value/id count mismatch");
  auto out = open_out(path);
  out << "trip_id,origin,destination,value\n";
  const int s = route.stops;
  for (std::size_t n = 0; n < values.size(); ++n)
    for (int i = 0; i < s - 1; ++i)
      for (int j = i + 1; j < s; ++j)
        out << trip_ids[n] << ',' << (i + 1) << ',' << (j + 1) << ','
            << format_double(values[n][static_cast<std::size_t>(od_flat_index(s, i, j))]) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

std::vector<std::vector<double>> align_estimates(const EstimateTable& table, const Dataset& data) {
  std::map<std::string, std::size_t> index;
  for (std::size_t n = 0; n < table.trip_ids.size(); ++n) index[table.trip_ids[n]] = n;
  std::vector<std::vector<double>> out;
  out.reserve(data.trips.size());
  for (const auto& trip : data.trips) {
    const auto it = index.find(trip.trip_id);
    if (it == index.end())
      throw IoError("trip '" + trip.trip_id + "' missing from estimate table");
    std::vector<double> row = table.values[it->second];
    if (table.route.stops != data.route.stops) {
      std::vector<double> spread(static_cast<std::size_t>(data.route.od_pairs()), 0.0);
      for (int i = 0; i < table.route.stops - 1; ++i)
        for (int j = i + 1; j < table.route.stops; ++j)
          spread[static_cast<std::size_t>(od_flat_index(data.route.stops, i, j))] =
              row[static_cast<std::size_t>(od_flat_index(table.route.stops, i, j))];
      row = std::move(spread);
    }
    out.push_back(std::move(row));
  }
  return out;
}

void write_posterior_summary(const PosteriorSummary& summary, const std::string& path) {
  auto out = open_out(path);
  out << "trip_id,origin,destination,mean,sd,q025,q975\n";
  const int s = summary.route.stops;
  for (std::size_t n = 0; n < summary.trips.size(); ++n)
    for (int i = 0; i < s - 1; ++i)
      for (int j = i + 1; j < s; ++j) {
        const auto& e = summary.trips[n][static_cast<std::size_t>(od_flat_index(s, i, j))];
        out << summary.trip_ids[n] << ',' << (i + 1) << ',' << (j + 1) << ','
            << format_double(e.mean) << ',' << format_double(e.sd) << ',' << format_double(e.q025)
            << ',' << format_double(e.q975) << '\n';
      }
  if (!out) throw IoError(path + ": write failed");
}

PosteriorSummary read_posterior_summary(const std::string& path) {
  auto in = open_in(path);
  check_header(path, in, "trip_id,origin,destination,mean,sd,q025,q975");

  PosteriorSummary summary;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::tuple<int, int, ODSummaryEntry>>> cells;
  int max_stop = 0;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 7) fail(path, line_no, "expected 7 fields, got " + std::to_string(fields.size()));
    const int origin = static_cast<int>(parse_long(path, line_no, fields[1]));
    const int dest = static_cast<int>(parse_long(path, line_no, fields[2]));
    if (origin < 1 || dest <= origin) fail(path, line_no, "need 1 <= origin < destination");
    ODSummaryEntry e{parse_double(path, line_no, fields[3]), parse_double(path, line_no, fields[4]),
                     parse_double(path, line_no, fields[5]), parse_double(path, line_no, fields[6])};
    auto [it, inserted] = index.try_emplace(fields[0], summary.trip_ids.size());
    if (inserted) {
      summary.trip_ids.push_back(fields[0]);
      cells.emplace_back();
    }
    cells[it->second].emplace_back(origin, dest, e);
    max_stop = std::max(max_stop, dest);
  }
  if (summary.trip_ids.empty()) fail(path, line_no, "no data rows");
  summary.route.stops = max_stop;
  const int m = summary.route.od_pairs();
  summary.trips.assign(cells.size(), std::vector<ODSummaryEntry>(static_cast<std::size_t>(m)));
  for (std::size_t n = 0; n < cells.size(); ++n) {
    if (cells[n].size() != static_cast<std::size_t>(m))
      throw IoError(path + ": trip '" + summary.trip_ids[n] + "' has incomplete OD rows");
    for (const auto& [origin, dest, e] : cells[n])
      summary.trips[n][static_cast<std::size_t>(od_flat_index(max_stop, origin - 1, dest - 1))] = e;
  }
  return summary;
}

void write_od_draws(const PosteriorSamples& samples, const std::string& path) {
  auto out = open_out(path, std::ios_base::binary);
  write_draw_header(out, "ODDRAWS1", samples.route, samples.trip_ids.size(),
                    samples.od_draws.size());
  for (const auto& draw : samples.od_draws)
    for (const auto& od : draw)
      for (const int c : od.counts) {
        const std::int32_t v = c;
        write_binary(out, &v, 4);
      }
  if (!out) throw IoError(path + ": write failed");
}

OdDrawStore read_od_draws(const std::string& path) {
  std::ifstream in(path, std::ios_base::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  const DrawHeader h = read_draw_header(in, path, "ODDRAWS1");
  OdDrawStore store;
  store.route = h.route;
  store.n_trips = static_cast<int>(h.n_trips);
  const int m = h.route.od_pairs();
  store.draws.resize(h.n_draws);
  for (auto& draw : store.draws) {
    draw.resize(h.n_trips);
    for (auto& od : draw) {
      od.counts.resize(static_cast<std::size_t>(m));
      for (auto& c : od.counts) c = read_scalar<std::int32_t>(in, path);
    }
  }
  return store;
}

void write_lambda_draws(const PosteriorSamples& samples, const std::string& path) {
  auto out = open_out(path, std::ios_base::binary);
  write_draw_header(out, "ODLAMBD1", samples.route, samples.trip_ids.size(),
                    samples.lambda_draws.size());
  for (const auto& draw : samples.lambda_draws)
    for (const auto& table : draw)
      for (const double p : table.probs) write_binary(out, &p, 8);
  if (!out) throw IoError(path + ": write failed");
}

LambdaDrawStore read_lambda_draws(const std::string& path) {
  std::ifstream in(path, std::ios_base::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  const DrawHeader h = read_draw_header(in, path, "ODLAMBD1");
  LambdaDrawStore store;
  store.route = h.route;
  store.n_trips = static_cast<int>(h.n_trips);
  const int m = h.route.od_pairs();
  store.draws.resize(h.n_draws);
  for (auto& draw : store.draws) {
    draw.resize(h.n_trips);
    for (auto& table : draw) {
      table.stops = h.route.stops;
      table.probs.resize(static_cast<std::size_t>(m));
      for (auto& p : table.probs) p = read_scalar<double>(in, path);
    }
  }
  return store;
}

void write_period_matrices(const std::vector<Eigen::MatrixXd>& matrices,
                           const std::vector<TimeWindow>& periods, const RouteConfig& route,
                           const std::string& path) {
  if (matrices.size() != periods.size()) throw IoError(path + ": matrix/period count mismatch");
  auto out = open_out(path);
  out << "period_index,period_start_s,period_end_s,origin,destination,value\n";
  const int s = route.stops;
  for (std::size_t p = 0; p < matrices.size(); ++p)
    for (int i = 0; i < s - 1; ++i)
      for (int j = i + 1; j < s; ++j)
        out << (p + 1) << ',' << format_double(periods[p].start_s) << ','
            << format_double(periods[p].end_s) << ',' << (i + 1) << ',' << (j + 1) << ','
            << format_double(matrices[p](i, j)) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

void write_metrics(const std::vector<std::pair<std::string, double>>& metrics,
                   const std::string& path) {
  auto out = open_out(path);
  out << "metric,value\n";
  for (const auto& [name, value] : metrics) out << name << ',' << format_double(value) << '\n';
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace busod
