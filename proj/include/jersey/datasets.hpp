#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "jersey/error.hpp"
#include "jersey/rng.hpp"

namespace jersey {

/// Jersey-number classes: 0-99 are numbers, 100 is "unrecognizable".
inline constexpr int kNumClasses = 101;
inline constexpr int kUnrecognizable = 100;
inline constexpr int kMultiLabelSize = 21;
inline constexpr int kRightOffset = 10;
inline constexpr int kUnrecognizableIndex = 20;

struct Digits {
  std::optional<int> left;
  std::optional<int> right;

  friend bool operator==(const Digits&, const Digits&) = default;
};

inline Digits digits_for_class(int cls) {
  if (cls < 0 || cls > kUnrecognizable) throw Error(Errc::OutOfRange, "class " + std::to_string(cls));
  if (cls == kUnrecognizable) return {};
  if (cls < 10) return {std::nullopt, cls};
  return {cls / 10, cls % 10};
}

// ---------------------------------------------------------------------------
// Manifest

struct Record {
  std::string path;  // relative to the manifest root
  int cls = 0;
  Digits digits;
  std::string source;
  std::string policy;
  std::uint64_t seed = 0;
  bool duplicate = false;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  friend bool operator==(const Record&, const Record&) = default;
};

struct Manifest {
  std::filesystem::path root;
  std::vector<Record> records;

  std::filesystem::path resolve(const Record& r) const { return root / r.path; }

  std::map<int, std::size_t> class_counts() const {
    std::map<int, std::size_t> counts;
    for (const auto& r : records) ++counts[r.cls];
    return counts;
  }

  std::set<int> classes() const {
    std::set<int> out;
    for (const auto& r : records) out.insert(r.cls);
    return out;
  }
};

namespace detail {

inline const std::set<std::string>& known_record_keys() {
  static const std::set<std::string> keys = {"path", "class", "digits", "source", "policy", "seed", "duplicate"};
  return keys;
}

inline nlohmann::ordered_json digit_json(const std::optional<int>& d) {
  return d ? nlohmann::ordered_json(*d) : nlohmann::ordered_json(nullptr);
}

}  // namespace detail

inline nlohmann::ordered_json record_to_json(const Record& r) {
  nlohmann::ordered_json j;
  j["path"] = r.path;
  j["class"] = r.cls;
  j["digits"] = nlohmann::ordered_json::array({detail::digit_json(r.digits.left), detail::digit_json(r.digits.right)});
  j["source"] = r.source;
  j["policy"] = r.policy;
  j["seed"] = r.seed;
  if (r.duplicate) j["duplicate"] = true;
  for (const auto& [key, value] : r.extra.items()) j[key] = value;
  return j;
}

inline Record record_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
  Record r;
  r.path = j.at("path").get<std::string>();
  r.cls = j.at("class").get<int>();
  if (r.cls < 0 || r.cls > kUnrecognizable) throw std::invalid_argument("class out of range [0,100]");
  if (j.contains("digits")) {
    const auto& d = j.at("digits");
    if (!d.is_array() || d.size() != 2) throw std::invalid_argument("digits must be a 2-element array");
    if (!d[0].is_null()) r.digits.left = d[0].get<int>();
    if (!d[1].is_null()) r.digits.right = d[1].get<int>();
    if (!(r.digits == digits_for_class(r.cls))) throw std::invalid_argument("digits inconsistent with class");
  } else {
    r.digits = digits_for_class(r.cls);
  }
  r.source = j.value("source", std::string{});
  r.policy = j.value("policy", std::string{});
  r.seed = j.value("seed", std::uint64_t{0});
  r.duplicate = j.value("duplicate", false);
  for (const auto& [key, value] : j.items()) {
    if (!detail::known_record_keys().contains(key)) r.extra[key] = value;
  }
  return r;
}

inline std::string manifest_to_string(const Manifest& m) {
  std::string out;
  for (const auto& r : m.records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// JSON-lines, one record per line, record order preserved.
inline void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error(Errc::IoError, "cannot write manifest " + path.string());
  os << manifest_to_string(m);
  if (!os) throw Error(Errc::IoError, "write failed for " + path.string());
}

/// The manifest root is the directory containing the file.
inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::FileNotFound, path.string());
  Manifest m;
  m.root = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      m.records.push_back(record_from_json(nlohmann::ordered_json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(Errc::ParseError, path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Multi-label encoding: indices 0-9 left digit, 10-19 right digit, 20
// unrecognizable. Single-digit numbers set only the right digit.

struct MultiLabelVector {
  std::array<std::uint8_t, kMultiLabelSize> bits{};

  bool test(int i) const { return bits[static_cast<std::size_t>(i)] != 0; }

  template <typename T = float>
  std::array<T, kMultiLabelSize> scores() const {
    std::array<T, kMultiLabelSize> s{};
    for (std::size_t i = 0; i < bits.size(); ++i) s[i] = bits[i] ? T(1) : T(0);
    return s;
  }

  friend bool operator==(const MultiLabelVector&, const MultiLabelVector&) = default;
};

inline MultiLabelVector encode_multilabel(int cls) {
  const Digits d = digits_for_class(cls);
  MultiLabelVector v;
  if (cls == kUnrecognizable) {
    v.bits[kUnrecognizableIndex] = 1;
    return v;
  }
  if (d.left) v.bits[static_cast<std::size_t>(*d.left)] = 1;
  v.bits[static_cast<std::size_t>(kRightOffset + *d.right)] = 1;
  return v;
}

struct DecodedLabel {
  int cls = kUnrecognizable;
  double confidence = 0.0;
};

/// Decodes 21 per-label probabilities. Exact ties go to the lower digit.
/// When nothing clears the threshold the result is class 100 and its
/// confidence is the unrecognizable score itself.
template <typename T>
DecodedLabel decode_multilabel(std::span<const T> scores, double threshold) {
  if (scores.size() != static_cast<std::size_t>(kMultiLabelSize)) {
    throw Error(Errc::ShapeMismatch, "multi-label decode expects 21 scores");
  }
  auto argmax = [&](int offset) {
    int best = 0;
    for (int i = 1; i < 10; ++i) {
      if (scores[static_cast<std::size_t>(offset + i)] > scores[static_cast<std::size_t>(offset + best)]) best = i;
    }
    return best;
  };
  const int left = argmax(0);
  const int right = argmax(kRightOffset);
  const double left_score = static_cast<double>(scores[static_cast<std::size_t>(left)]);
  const double right_score = static_cast<double>(scores[static_cast<std::size_t>(kRightOffset + right)]);
  const double unknown = static_cast<double>(scores[kUnrecognizableIndex]);

  if (unknown >= threshold && unknown >= left_score && unknown >= right_score) return {kUnrecognizable, unknown};
  if (right_score >= threshold && left_score >= threshold) {
    return {10 * left + right, 0.5 * (left_score + right_score)};
  }
  if (right_score >= threshold) return {right, right_score};
  return {kUnrecognizable, unknown};
}

template <typename T, std::size_t N>
DecodedLabel decode_multilabel(const std::array<T, N>& scores, double threshold) {
  return decode_multilabel(std::span<const T>(scores.data(), scores.size()), threshold);
}

// ---------------------------------------------------------------------------
// Balancing and splits

/// Classes below `target` are topped up by cycling through a seeded shuffle
/// of their records; added rows carry `duplicate = true`. `expected_classes`
/// lets the caller assert that every listed class has at least one record.
inline Manifest balance_upsample(const Manifest& m, std::size_t target, AugSeed seed,
                                 const std::set<int>& expected_classes = {}) {
  if (target < 1) throw Error(Errc::InvalidArgument, "balance target must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < m.records.size(); ++i) by_class[m.records[i].cls].push_back(i);
  for (int cls : expected_classes) {
    if (!by_class.contains(cls)) throw Error(Errc::EmptyClass, "class " + std::to_string(cls) + " has no records");
  }
  Manifest out{m.root, m.records};
  for (auto& [cls, indices] : by_class) {
    if (indices.size() >= target) continue;
    std::vector<std::size_t> order = indices;
    Rng rng = seed.child(static_cast<std::uint64_t>(cls)).rng();
    rng.shuffle(order.begin(), order.end());
    for (std::size_t k = 0; indices.size() + k < target; ++k) {
      Record dup = m.records[order[k % order.size()]];
      dup.duplicate = true;
      out.records.push_back(std::move(dup));
    }
  }
  return out;
}

namespace detail {

/// Largest-remainder apportionment of `n` items over `fractions`, then each
/// bucket raised to `min_each` by taking from the largest bucket.
inline std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions, std::size_t min_each) {
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.emplace_back(exact - static_cast<double>(counts[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  while (assigned > n) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  for (auto& c : counts) {
    while (c < min_each) {
      auto it = std::max_element(counts.begin(), counts.end());
      if (*it <= min_each) break;
      --*it;
      ++c;
    }
  }
  return counts;
}

/// Stratified partition by class. Records sharing a path (originals and
/// their duplicates) form one group and always land in the same part.
inline std::vector<Manifest> stratified_partition(const Manifest& m, const std::vector<double>& fractions,
                                                  AugSeed seed, std::size_t min_each) {
  std::map<int, std::vector<std::string>> group_order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    auto [it, inserted] = groups.try_emplace(std::to_string(r.cls) + "\x1f" + r.path);
    if (inserted) group_order[r.cls].push_back(it->first);
    it->second.push_back(i);
  }
  std::vector<int> assignment(m.records.size(), 0);
  for (auto& [cls, keys] : group_order) {
    if (keys.size() < min_each * fractions.size()) {
      throw Error(Errc::InsufficientClass, "class " + std::to_string(cls) + " has " + std::to_string(keys.size()) +
                                               " distinct records; cannot stratify " +
                                               std::to_string(fractions.size()) + " ways");
    }
    Rng rng = seed.child(static_cast<std::uint64_t>(cls)).rng();
    rng.shuffle(keys.begin(), keys.end());
    const auto counts = apportion(keys.size(), fractions, min_each);
    std::size_t pos = 0;
    for (std::size_t part = 0; part < counts.size(); ++part) {
      for (std::size_t k = 0; k < counts[part]; ++k, ++pos) {
        for (auto idx : groups[keys[pos]]) assignment[idx] = static_cast<int>(part);
      }
    }
  }
  std::vector<Manifest> parts(fractions.size(), Manifest{m.root, {}});
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    parts[static_cast<std::size_t>(assignment[i])].records.push_back(m.records[i]);
  }
  return parts;
}

}  // namespace detail

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitResult {
  Manifest train;
  Manifest val;
  Manifest test;
};

/// Stratified three-way split. With `test_per_class` the test part is
/// upsampled afterwards so every class has at least that many rows.
inline SplitResult split(const Manifest& m, SplitFractions f, AugSeed seed,
                         std::optional<std::size_t> test_per_class = std::nullopt) {
  if (!(f.train > 0 && f.val > 0 && f.test > 0) || std::abs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw Error(Errc::InvalidArgument, "split fractions must be positive and sum to 1");
  }
  auto parts = detail::stratified_partition(m, {f.train, f.val, f.test}, seed, 1);
  SplitResult out{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
  if (test_per_class) out.test = balance_upsample(out.test, *test_per_class, seed.child(0x7e57));
  return out;
}

/// Two-way stratified holdout: returns {remaining, held_out}.
inline std::pair<Manifest, Manifest> holdout(const Manifest& m, double fraction, AugSeed seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw Error(Errc::InvalidArgument, "holdout fraction must be in [0, 1)");
  auto parts = detail::stratified_partition(m, {1.0 - fraction, fraction}, seed, 0);
  return {std::move(parts[0]), std::move(parts[1])};
}

}  // namespace jersey
