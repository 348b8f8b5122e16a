#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace difuada {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

/// Symmetric matrix of Euclidean edge weights with a zero diagonal.
using DistanceMatrix = Eigen::MatrixXd;

struct TspInstance {
  std::string id;
  std::vector<Point> points;
  /// Known optimal objective (y*), when an exact oracle has solved the instance.
  std::optional<double> reference_optimum;

  std::size_t size() const { return points.size(); }
  friend bool operator==(const TspInstance&, const TspInstance&) = default;
};

struct PctspInstance {
  TspInstance base;
  std::size_t depot = 0;
  std::vector<double> prizes;
  std::vector<double> penalties;
  double prize_threshold = 1.0;

  std::size_t size() const { return base.size(); }
  friend bool operator==(const PctspInstance&, const PctspInstance&) = default;
};

struct OpInstance {
  TspInstance base;
  std::size_t depot = 0;
  std::vector<double> scores;
  double budget = 2.0;

  std::size_t size() const { return base.size(); }
  friend bool operator==(const OpInstance&, const OpInstance&) = default;
};

struct TimeWindow {
  int earliest = 0;
  int latest = 0;

  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Unit travel time per hop: the k-th node of a depot-first tour is reached at
/// time k, and must satisfy earliest <= k <= latest.
struct TspTwInstance {
  TspInstance base;
  std::vector<TimeWindow> windows;
  int horizon = 0;

  std::size_t size() const { return base.size(); }
  friend bool operator==(const TspTwInstance&, const TspTwInstance&) = default;
};

using Instance = std::variant<TspInstance, PctspInstance, OpInstance, TspTwInstance>;

enum class ProblemKind { tsp, pctsp, op, tsptw };

std::string_view to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view name);

ProblemKind kind_of(const Instance& instance);
const TspInstance& base_of(const Instance& instance);
TspInstance& base_of(Instance& instance);
std::size_t depot_of(const Instance& instance);

struct GeneratorConfig {
  double penalty_scale = 6.0;    // p_v ~ U(0, penalty_scale / n)
  double prize_threshold = 1.0;  // R
  double op_budget = 2.0;        // B
  int tw_horizon = 0;            // 0 selects n
  int tw_slack = 2;
  int max_retries = 100;
};

TspInstance gen_tsp(std::size_t n, std::uint64_t seed);
PctspInstance gen_pctsp(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg = {});
OpInstance gen_op(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg = {});
TspTwInstance gen_tsptw(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg = {});
Instance generate(ProblemKind kind, std::size_t n, std::uint64_t seed,
                  const GeneratorConfig& cfg = {});

DistanceMatrix distance_matrix(const TspInstance& instance);
DistanceMatrix distance_matrix(const Instance& instance);

/// Checks every structural invariant of the instance; throws on violation.
void validate(const Instance& instance);

void write_instance(const Instance& instance, const std::filesystem::path& path);
Instance read_instance(const std::filesystem::path& path);
std::string format_instance(const Instance& instance);
Instance parse_instance(std::string_view text);

/// Shortest decimal representation that round-trips bit-exactly.
std::string format_double(double value);

}  // namespace difuada
