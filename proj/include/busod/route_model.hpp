// Route geometry, observed counts, OD vectors and the linear map between them.
//
// A journey on a route with S stops is observed as boarding counts u and
// alighting counts v. The unobserved OD vector y stacks the upper triangle of
// the stop-to-stop flow matrix row-major:
//   y = (y_{1,2},...,y_{1,S}, y_{2,3},...,y_{2,S}, ..., y_{S-1,S}),
// length M = S(S-1)/2, and satisfies x = A y with x = (u, v) and A the binary
// routing matrix. Stops are 1-indexed in file formats and messages; code uses
// 0-based indices.
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace busod {

struct RouteConfig {
  int stops = 0;  // S >= 2

  int od_pairs() const { return stops * (stops - 1) / 2; }  // M
};

// Flat index of OD pair (i, j), 0-based stops, i < j, row-major upper triangle.
inline int od_flat_index(int stops, int i, int j) {
  return i * (stops - 1) - i * (i - 1) / 2 + (j - i - 1);
}

struct TripObservation {
  std::string trip_id;
  std::vector<int> boardings;   // u, length S, u[S-1] == 0
  std::vector<int> alightings;  // v, length S, v[0]  == 0
  double departure_s = 0.0;     // departure time at the first stop, epoch-relative seconds
};

struct ODVector {
  std::vector<int> counts;  // length M

  int size() const { return static_cast<int>(counts.size()); }
  int& operator[](int k) { return counts[static_cast<std::size_t>(k)]; }
  int operator[](int k) const { return counts[static_cast<std::size_t>(k)]; }
  bool operator==(const ODVector&) const = default;
};

// A validated journey collection in departure-time order. Psi rows, retained
// draws and all file formats follow this trip order.
struct Dataset {
  RouteConfig route;
  std::vector<TripObservation> trips;

  int n_trips() const { return static_cast<int>(trips.size()); }
  Eigen::VectorXd departure_times() const;
};

// Half-open time window [start_s, end_s), epoch-relative seconds.
struct TimeWindow {
  double start_s = 0.0;
  double end_s = 0.0;

  bool contains(double t) const { return t >= start_s && t < end_s; }
  double hours() const { return (end_s - start_s) / 3600.0; }
};

struct Violation {
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

// Binary routing matrix A (2S x M): rows 1..S give boarding sums, rows
// S+1..2S alighting sums. Rows S and S+1 stay all-zero so row index == stop
// number on both halves.
Eigen::MatrixXi build_routing_matrix(const RouteConfig& route);

// (u, v) = the two halves of A*y.
std::pair<std::vector<int>, std::vector<int>> od_to_counts(const ODVector& y,
                                                           const RouteConfig& route);

// Checks every TripObservation invariant; the verdict lists all violations
// with 1-based stop indices. Ingestion treats any violation as a hard error.
ValidationResult validate_observation(const TripObservation& obs);

// Occupancy after leaving each stop: w_i = w_{i-1} + u_i - v_i, w_0 = 0.
// Throws std::invalid_argument if the observation is invalid.
std::vector<int> occupancy(const TripObservation& obs);

// Exhaustively enumerates H(x) = { y >= 0 : A y = x }. Test oracle; throws
// std::runtime_error once more than `cap` solutions are found.
std::vector<ODVector> enumerate_feasible(const TripObservation& obs, std::size_t cap);

// Upper-triangular S x S matrix view of a flat OD vector (real-valued overload
// serves IPF and estimators).
Eigen::MatrixXd od_vector_to_matrix(const std::vector<double>& flat, const RouteConfig& route);
Eigen::MatrixXd od_vector_to_matrix(const ODVector& y, const RouteConfig& route);
std::vector<double> od_matrix_to_vector(const Eigen::MatrixXd& m, const RouteConfig& route);

}  // namespace busod
