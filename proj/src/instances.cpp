#include "difuada/instances.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "difuada/errors.hpp"
#include "difuada/rng.hpp"

namespace difuada {

namespace {

constexpr std::string_view kMagic = "DIFUADA-INST";
constexpr std::string_view kVersion = "v1";

std::vector<Point> uniform_points(std::size_t n, Rng& rng) {
  std::vector<Point> points(n);
  for (auto& p : points) {
    p.x = rng.uniform();
    p.y = rng.uniform();
  }
  return points;
}

void require_size(std::size_t n, std::size_t min_n, std::string_view what) {
  if (n < min_n) {
    throw SizeError(fmt::format("{} requires n >= {}, got {}", what, min_n, n));
  }
}

std::string make_id(std::string_view kind, std::size_t n, std::uint64_t seed) {
  return fmt::format("{}-{}-{}", kind, n, seed);
}

}  // namespace

std::string_view to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::tsp: return "tsp";
    case ProblemKind::pctsp: return "pctsp";
    case ProblemKind::op: return "op";
    case ProblemKind::tsptw: return "tsptw";
  }
  return "unknown";
}

ProblemKind parse_problem_kind(std::string_view name) {
  if (name == "tsp") return ProblemKind::tsp;
  if (name == "pctsp") return ProblemKind::pctsp;
  if (name == "op") return ProblemKind::op;
  if (name == "tsptw") return ProblemKind::tsptw;
  throw ConfigError(fmt::format("unknown problem kind '{}'", name));
}

ProblemKind kind_of(const Instance& instance) {
  return static_cast<ProblemKind>(instance.index());
}

const TspInstance& base_of(const Instance& instance) {
  return std::visit(
      [](const auto& inst) -> const TspInstance& {
        if constexpr (std::is_same_v<std::decay_t<decltype(inst)>, TspInstance>) {
          return inst;
        } else {
          return inst.base;
        }
      },
      instance);
}

TspInstance& base_of(Instance& instance) {
  return const_cast<TspInstance&>(base_of(std::as_const(instance)));
}

std::size_t depot_of(const Instance& instance) {
  if (const auto* p = std::get_if<PctspInstance>(&instance)) return p->depot;
  if (const auto* o = std::get_if<OpInstance>(&instance)) return o->depot;
  return 0;
}

TspInstance gen_tsp(std::size_t n, std::uint64_t seed) {
  require_size(n, 3, "gen_tsp");
  Rng rng(derive_seed(seed, 0));
  return TspInstance{make_id("tsp", n, seed), uniform_points(n, rng), std::nullopt};
}

PctspInstance gen_pctsp(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg) {
  require_size(n, 4, "gen_pctsp");
  Rng rng(derive_seed(seed, 1));
  PctspInstance inst;
  inst.base = TspInstance{make_id("pctsp", n, seed), uniform_points(n, rng), std::nullopt};
  inst.depot = 0;
  inst.prize_threshold = cfg.prize_threshold;
  inst.penalties.assign(n, 0.0);
  const double dn = static_cast<double>(n);
  for (std::size_t v = 1; v < n; ++v) inst.penalties[v] = rng.uniform(0.0, cfg.penalty_scale / dn);

  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    inst.prizes.assign(n, 0.0);
    for (std::size_t v = 1; v < n; ++v) inst.prizes[v] = rng.uniform(0.0, 4.0 / dn);
    const double total = std::accumulate(inst.prizes.begin(), inst.prizes.end(), 0.0);
    if (total >= inst.prize_threshold) return inst;
  }
  throw InfeasibleInstanceError(fmt::format(
      "gen_pctsp: total prize stayed below threshold {} after {} retries",
      cfg.prize_threshold, cfg.max_retries));
}

OpInstance gen_op(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg) {
  require_size(n, 4, "gen_op");
  Rng rng(derive_seed(seed, 2));
  OpInstance inst;
  inst.base = TspInstance{make_id("op", n, seed), uniform_points(n, rng), std::nullopt};
  inst.depot = 0;
  inst.budget = cfg.op_budget;
  inst.scores.assign(n, 0.0);
  for (std::size_t v = 1; v < n; ++v) inst.scores[v] = rng.uniform();

  const DistanceMatrix w = distance_matrix(inst.base);
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t v = 1; v < n; ++v) nearest = std::min(nearest, w(0, v));
  if (inst.budget < 2.0 * nearest) {
    throw InfeasibleInstanceError(fmt::format(
        "gen_op: budget {} cannot reach any node (nearest round trip {})", inst.budget,
        2.0 * nearest));
  }
  return inst;
}

TspTwInstance gen_tsptw(std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg) {
  require_size(n, 3, "gen_tsptw");
  const int horizon = cfg.tw_horizon == 0 ? static_cast<int>(n) : cfg.tw_horizon;
  if (horizon < static_cast<int>(n)) {
    throw SizeError(fmt::format("gen_tsptw: horizon {} below node count {}", horizon, n));
  }
  if (cfg.tw_slack < 0) throw ConfigError("gen_tsptw: slack must be nonnegative");
  Rng rng(derive_seed(seed, 3));
  TspTwInstance inst;
  inst.base = TspInstance{make_id("tsptw", n, seed), uniform_points(n, rng), std::nullopt};
  inst.horizon = horizon;

  // Reference tour: depot first, the rest in a random order.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 1; --i) {
    std::swap(order[i], order[1 + rng.below(i)]);
  }
  inst.windows.assign(n, TimeWindow{});
  for (std::size_t pos = 0; pos < n; ++pos) {
    const int k = static_cast<int>(pos);
    inst.windows[order[pos]] =
        TimeWindow{std::max(0, k - cfg.tw_slack), std::min(horizon, k + cfg.tw_slack)};
  }
  return inst;
}

Instance generate(ProblemKind kind, std::size_t n, std::uint64_t seed, const GeneratorConfig& cfg) {
  switch (kind) {
    case ProblemKind::tsp: return gen_tsp(n, seed);
    case ProblemKind::pctsp: return gen_pctsp(n, seed, cfg);
    case ProblemKind::op: return gen_op(n, seed, cfg);
    case ProblemKind::tsptw: return gen_tsptw(n, seed, cfg);
  }
  throw ConfigError("generate: unknown problem kind");
}

DistanceMatrix distance_matrix(const TspInstance& instance) {
  const auto n = static_cast<Eigen::Index>(instance.size());
  DistanceMatrix w = DistanceMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = instance.points[static_cast<std::size_t>(i)];
      const auto& b = instance.points[static_cast<std::size_t>(j)];
      w(i, j) = w(j, i) = std::hypot(a.x - b.x, a.y - b.y);
    }
  }
  return w;
}

DistanceMatrix distance_matrix(const Instance& instance) {
  return distance_matrix(base_of(instance));
}

namespace {

void validate_base(const TspInstance& base) {
  if (base.size() < 3) throw SizeError(fmt::format("instance has {} nodes, need >= 3", base.size()));
  for (const auto& p : base.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ParseError("non-finite coordinate");
  }
  auto sorted = base.points;
  std::sort(sorted.begin(), sorted.end(),
            [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ParseError("instance contains duplicate points");
  }
}

void validate_node_values(const std::vector<double>& values, std::size_t n, std::string_view name) {
  if (values.size() != n) throw ParseError(fmt::format("{} has {} entries for {} nodes", name, values.size(), n));
  for (std::size_t v = 0; v < n; ++v) {
    if (!std::isfinite(values[v]) || values[v] < 0.0) {
      throw ParseError(fmt::format("{} of node {} is negative or non-finite", name, v));
    }
  }
}

}  // namespace

void validate(const Instance& instance) {
  validate_base(base_of(instance));
  const std::size_t n = base_of(instance).size();
  std::visit(
      [n](const auto& inst) {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, PctspInstance>) {
          if (inst.depot != 0) throw ParseError("depot must be node 0");
          validate_node_values(inst.prizes, n, "prize");
          validate_node_values(inst.penalties, n, "penalty");
          if (inst.prizes[0] != 0.0 || inst.penalties[0] != 0.0) {
            throw ParseError("depot prize and penalty must be zero");
          }
          if (!std::isfinite(inst.prize_threshold) || inst.prize_threshold < 0.0) {
            throw ParseError("prize threshold must be finite and nonnegative");
          }
          const double total = std::accumulate(inst.prizes.begin(), inst.prizes.end(), 0.0);
          if (total < inst.prize_threshold) {
            throw InfeasibleInstanceError("total prize is below the prize threshold");
          }
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          if (inst.depot != 0) throw ParseError("depot must be node 0");
          validate_node_values(inst.scores, n, "score");
          if (inst.scores[0] != 0.0) throw ParseError("depot score must be zero");
          if (!std::isfinite(inst.budget) || inst.budget <= 0.0) {
            throw ParseError("budget must be positive and finite");
          }
        } else if constexpr (std::is_same_v<T, TspTwInstance>) {
          if (inst.windows.size() != n) throw ParseError("window count does not match node count");
          for (std::size_t v = 0; v < n; ++v) {
            const auto& tw = inst.windows[v];
            if (tw.earliest < 0 || tw.earliest > tw.latest || tw.latest > inst.horizon) {
              throw ParseError(fmt::format("time window of node {} violates 0 <= e <= l <= H", v));
            }
          }
        }
      },
      instance);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_instance(const Instance& instance) {
  const TspInstance& base = base_of(instance);
  std::ostringstream out;
  out << kMagic << ' ' << kVersion << '\n';
  out << "kind " << to_string(kind_of(instance)) << '\n';
  out << "id " << (base.id.empty() ? "-" : base.id) << '\n';
  out << "n " << base.size() << '\n';
  if (base.reference_optimum) out << "optimum " << format_double(*base.reference_optimum) << '\n';
  std::visit(
      [&out](const auto& inst) {
        using T = std::decay_t<decltype(inst)>;
        if constexpr (std::is_same_v<T, PctspInstance>) {
          out << "depot " << inst.depot << '\n';
          out << "threshold " << format_double(inst.prize_threshold) << '\n';
        } else if constexpr (std::is_same_v<T, OpInstance>) {
          out << "depot " << inst.depot << '\n';
          out << "budget " << format_double(inst.budget) << '\n';
        } else if constexpr (std::is_same_v<T, TspTwInstance>) {
          out << "horizon " << inst.horizon << '\n';
        }
      },
      instance);
  for (std::size_t v = 0; v < base.size(); ++v) {
    out << "node " << v << ' ' << format_double(base.points[v].x) << ' '
        << format_double(base.points[v].y);
    if (const auto* p = std::get_if<PctspInstance>(&instance)) {
      out << ' ' << format_double(p->prizes[v]) << ' ' << format_double(p->penalties[v]);
    } else if (const auto* o = std::get_if<OpInstance>(&instance)) {
      out << ' ' << format_double(o->scores[v]);
    } else if (const auto* tw = std::get_if<TspTwInstance>(&instance)) {
      out << ' ' << tw->windows[v].earliest << ' ' << tw->windows[v].latest;
    }
    out << '\n';
  }
  out << "end\n";
  return out.str();
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Returns false at end of input. Skips blank lines and '#' comments.
  bool next(std::vector<std::string_view>& fields) {
    while (pos_ < text_.size()) {
      const auto end = text_.find('\n', pos_);
      std::string_view line = text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
      pos_ = end == std::string_view::npos ? text_.size() : end + 1;
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      fields.clear();
      std::size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) fields.push_back(line.substr(i, j - i));
        i = j;
      }
      if (fields.empty() || fields.front().front() == '#') continue;
      return true;
    }
    return false;
  }

  int line() const { return line_no_; }

  [[noreturn]] void fail(std::string_view msg) const {
    throw ParseError(fmt::format("line {}: {}", line_no_, msg));
  }

  double number(std::string_view field, std::string_view name) const {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      fail(fmt::format("field '{}' is not a number: '{}'", name, field));
    }
    return value;
  }

  long long integer(std::string_view field, std::string_view name) const {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      fail(fmt::format("field '{}' is not an integer: '{}'", name, field));
    }
    return value;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

}  // namespace

Instance parse_instance(std::string_view text) {
  LineReader reader(text);
  std::vector<std::string_view> f;
  if (!reader.next(f) || f.size() != 2 || f[0] != kMagic) {
    throw ParseError(fmt::format("line {}: missing '{} {}' header", reader.line(), kMagic, kVersion));
  }
  if (f[1] != kVersion) {
    throw VersionError(fmt::format("unsupported instance file version '{}' (expected {})", f[1], kVersion));
  }

  std::optional<ProblemKind> kind;
  std::string id;
  std::optional<std::size_t> n;
  std::optional<double> optimum, threshold, budget;
  std::optional<long long> depot, horizon;
  std::vector<Point> points;
  std::vector<std::vector<std::string_view>> extras;  // views into `text`
  std::vector<bool> seen;
  bool ended = false;

  while (reader.next(f)) {
    const std::string_view key = f[0];
    auto expect = [&](std::size_t count) {
      if (f.size() != count) reader.fail(fmt::format("'{}' expects {} fields, got {}", key, count - 1, f.size() - 1));
    };
    if (key == "kind") {
      expect(2);
      try {
        kind = parse_problem_kind(f[1]);
      } catch (const ConfigError&) {
        reader.fail(fmt::format("unknown kind '{}'", f[1]));
      }
    } else if (key == "id") {
      expect(2);
      id = f[1] == "-" ? std::string{} : std::string(f[1]);
    } else if (key == "n") {
      expect(2);
      const long long v = reader.integer(f[1], "n");
      if (v < 3) reader.fail("node count must be >= 3");
      n = static_cast<std::size_t>(v);
      points.assign(*n, Point{});
      extras.assign(*n, {});
      seen.assign(*n, false);
    } else if (key == "optimum") {
      expect(2);
      optimum = reader.number(f[1], "optimum");
    } else if (key == "depot") {
      expect(2);
      depot = reader.integer(f[1], "depot");
    } else if (key == "threshold") {
      expect(2);
      threshold = reader.number(f[1], "threshold");
    } else if (key == "budget") {
      expect(2);
      budget = reader.number(f[1], "budget");
    } else if (key == "horizon") {
      expect(2);
      horizon = reader.integer(f[1], "horizon");
    } else if (key == "node") {
      if (!n || !kind) reader.fail("'node' record before 'kind' and 'n'");
      const std::size_t want = *kind == ProblemKind::tsp ? 4 : *kind == ProblemKind::op ? 5 : 6;
      expect(want);
      const long long idx = reader.integer(f[1], "node index");
      if (idx < 0 || static_cast<std::size_t>(idx) >= *n) reader.fail("node index out of range");
      const auto v = static_cast<std::size_t>(idx);
      if (seen[v]) reader.fail(fmt::format("node {} defined twice", v));
      seen[v] = true;
      points[v] = Point{reader.number(f[2], "x"), reader.number(f[3], "y")};
      extras[v].assign(f.begin() + 4, f.end());
    } else if (key == "end") {
      expect(1);
      ended = true;
      break;
    } else {
      reader.fail(fmt::format("unknown record '{}'", key));
    }
  }
  if (!ended) throw ParseError(fmt::format("line {}: truncated file (missing 'end')", reader.line()));
  if (!kind) throw ParseError("missing 'kind' record");
  if (!n) throw ParseError("missing 'n' record");
  for (std::size_t v = 0; v < *n; ++v) {
    if (!seen[v]) throw ParseError(fmt::format("node {} missing", v));
  }

  TspInstance base{id, points, optimum};
  auto parse_num = [&](std::string_view field, std::size_t v, std::string_view name) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      throw ParseError(fmt::format("node {}: field '{}' is not a number", v, name));
    }
    return value;
  };
  auto parse_int = [&](std::string_view field, std::size_t v, std::string_view name) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
      throw ParseError(fmt::format("node {}: field '{}' is not an integer", v, name));
    }
    return static_cast<int>(value);
  };

  Instance result;
  switch (*kind) {
    case ProblemKind::tsp:
      result = std::move(base);
      break;
    case ProblemKind::pctsp: {
      if (!threshold) throw ParseError("pctsp instance missing 'threshold'");
      PctspInstance inst;
      inst.base = std::move(base);
      inst.depot = static_cast<std::size_t>(depot.value_or(0));
      inst.prize_threshold = *threshold;
      inst.prizes.resize(*n);
      inst.penalties.resize(*n);
      for (std::size_t v = 0; v < *n; ++v) {
        inst.prizes[v] = parse_num(extras[v][0], v, "prize");
        inst.penalties[v] = parse_num(extras[v][1], v, "penalty");
      }
      result = std::move(inst);
      break;
    }
    case ProblemKind::op: {
      if (!budget) throw ParseError("op instance missing 'budget'");
      OpInstance inst;
      inst.base = std::move(base);
      inst.depot = static_cast<std::size_t>(depot.value_or(0));
      inst.budget = *budget;
      inst.scores.resize(*n);
      for (std::size_t v = 0; v < *n; ++v) inst.scores[v] = parse_num(extras[v][0], v, "score");
      result = std::move(inst);
      break;
    }
    case ProblemKind::tsptw: {
      if (!horizon) throw ParseError("tsptw instance missing 'horizon'");
      TspTwInstance inst;
      inst.base = std::move(base);
      inst.horizon = static_cast<int>(*horizon);
      inst.windows.resize(*n);
      for (std::size_t v = 0; v < *n; ++v) {
        inst.windows[v] = TimeWindow{parse_int(extras[v][0], v, "earliest"),
                                     parse_int(extras[v][1], v, "latest")};
      }
      result = std::move(inst);
      break;
    }
  }
  validate(result);
  return result;
}

void write_instance(const Instance& instance, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
  out << format_instance(instance);
  if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
}

Instance read_instance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open instance file '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_instance(buf.str());
  } catch (const VersionError& e) {
    throw VersionError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace difuada
