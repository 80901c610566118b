#pragma once

// A dataset bundle on disk: one NPY file per array plus a key = value
// manifest.
//
//   X_train.npy (n, d)   y_train.npy (n,)   X_test.npy (n_test, d)
//   y_test.npy (n_test,) reps.npy (n_c, d)  probes.npy (n, m)
//   manifest.txt

#include "blockgp/dataset.hpp"
#include "blockgp/logdet.hpp"
#include "blockgp/npy.hpp"
#include "blockgp/types.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace blockgp {

/// Ordered key = value text records (manifests, hyperparameter files, metrics).
class KeyValues {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, const char* value) { set(key, std::string(value)); }

  [[nodiscard]] bool has(const std::string& key) const {
    for (const auto& kv : entries_) {
      if (kv.first == key) return true;
    }
    return false;
  }
  [[nodiscard]] const std::string& get(const std::string& key) const {
    for (const auto& kv : entries_) {
      if (kv.first == key) return kv.second;
    }
    throw FormatError(origin_ + ": missing key '" + key + "'");
  }
  [[nodiscard]] double get_double(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError(origin_ + ": key '" + key + "' is not a number: '" + s + "'");
    }
  }
  [[nodiscard]] long long get_int(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError(origin_ + ": key '" + key + "' is not an integer: '" + s + "'");
    }
  }
  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw FormatError(origin_ + ": key '" + key + "' is not an unsigned integer: '" + s + "'");
    }
  }
  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  [[nodiscard]] std::string str() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(path.string() + ": cannot open for writing");
    out << str();
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(path.string() + ": cannot open");
    KeyValues kv;
    kv.origin_ = path.string();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  // Shortest text that reads back to the same double.
  static std::string format(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }

  std::vector<std::pair<std::string, std::string>> entries_;
  std::string origin_ = "<memory>";
};

template <typename Scalar>
void save_hyperparameters(const std::filesystem::path& path, const Hyperparameters<Scalar>& hp) {
  KeyValues kv;
  kv.set("lengthscale", static_cast<double>(hp.lengthscale));
  kv.set("noise", static_cast<double>(hp.noise));
  kv.set("output_scale", static_cast<double>(hp.output_scale));
  kv.save(path);
}

template <typename Scalar>
Hyperparameters<Scalar> hyperparameters_from(const KeyValues& kv, const std::string& prefix = "") {
  try {
    return Hyperparameters<Scalar>(static_cast<Scalar>(kv.get_double(prefix + "lengthscale")),
                                   static_cast<Scalar>(kv.get_double(prefix + "noise")),
                                   static_cast<Scalar>(kv.get_double(prefix + "output_scale")));
  } catch (const UsageError& e) {
    throw FormatError(std::string("hyperparameters: ") + e.what());
  }
}

template <typename Scalar>
Hyperparameters<Scalar> load_hyperparameters(const std::filesystem::path& path) {
  return hyperparameters_from<Scalar>(KeyValues::load(path));
}

template <typename Scalar>
struct Bundle {
  ClusteredDataset<Scalar> data;
  HutchinsonProbes<Scalar> probes;
  Hyperparameters<Scalar> initial_hp;
  KeyValues manifest;  // extra provenance keys (kind, seeds, generator parameters)
};

inline constexpr const char* kBundleFormat = "blockgp-bundle-1";

template <typename Scalar>
void write_bundle(const std::filesystem::path& dir, const Bundle<Scalar>& bundle) {
  const ClusteredDataset<Scalar>& ds = bundle.data;
  ds.validate();
  if (bundle.probes.n() != ds.n()) throw ShapeError("write_bundle: probe rows differ from training size");
  std::filesystem::create_directories(dir);
  npy::write_matrix(dir / "X_train.npy", ds.x_train);
  npy::write_vector(dir / "y_train.npy", ds.y_train);
  npy::write_matrix(dir / "X_test.npy", ds.x_test);
  npy::write_vector(dir / "y_test.npy", ds.y_test);
  npy::write_matrix(dir / "reps.npy", ds.reps);
  npy::write_matrix(dir / "probes.npy", bundle.probes.z);

  KeyValues kv;
  kv.set("format", kBundleFormat);
  kv.set("b", static_cast<long long>(ds.b));
  kv.set("n_c", static_cast<long long>(ds.n_c));
  kv.set("d", static_cast<long long>(ds.dim()));
  kv.set("n_train", static_cast<long long>(ds.n()));
  kv.set("n_test", static_cast<long long>(ds.x_test.rows()));
  kv.set("probes", static_cast<long long>(bundle.probes.m()));
  kv.set("probe_seed", bundle.probes.seed);
  kv.set("lengthscale", static_cast<double>(bundle.initial_hp.lengthscale));
  kv.set("noise", static_cast<double>(bundle.initial_hp.noise));
  kv.set("output_scale", static_cast<double>(bundle.initial_hp.output_scale));
  for (const auto& [k, v] : bundle.manifest.entries()) {
    if (!kv.has(k)) kv.set(k, v);
  }
  kv.save(dir / "manifest.txt");
}

template <typename Scalar>
Bundle<Scalar> read_bundle(const std::filesystem::path& dir) {
  const KeyValues kv = KeyValues::load(dir / "manifest.txt");
  const std::string manifest_file = (dir / "manifest.txt").string();
  if (kv.get("format") != kBundleFormat) throw FormatError(manifest_file + ": unknown bundle format");
  const auto b = static_cast<Eigen::Index>(kv.get_int("b"));
  const auto n_c = static_cast<Eigen::Index>(kv.get_int("n_c"));
  const auto d = static_cast<Eigen::Index>(kv.get_int("d"));
  if (b < 1 || n_c < 1 || d < 1) throw FormatError(manifest_file + ": b, n_c and d must be positive");

  Bundle<Scalar> out;
  ClusteredDataset<Scalar>& ds = out.data;
  ds.b = b;
  ds.n_c = n_c;
  ds.x_train = npy::read_matrix<Scalar>(dir / "X_train.npy");
  ds.y_train = npy::read_vector<Scalar>(dir / "y_train.npy");
  ds.x_test = npy::read_matrix<Scalar>(dir / "X_test.npy");
  ds.y_test = npy::read_vector<Scalar>(dir / "y_test.npy");
  ds.reps = npy::read_matrix<Scalar>(dir / "reps.npy");
  out.probes.z = npy::read_matrix<Scalar>(dir / "probes.npy");
  out.probes.seed = kv.has("probe_seed") ? kv.get_u64("probe_seed") : 0;

  const auto require = [&](bool ok, const char* file, const std::string& why) {
    if (!ok) throw FormatError((dir / file).string() + ": " + why);
  };
  require(ds.x_train.rows() == b * n_c, "X_train.npy",
          std::to_string(ds.x_train.rows()) + " rows but manifest b*n_c = " + std::to_string(b * n_c));
  require(ds.x_train.cols() == d, "X_train.npy", "column count differs from manifest d");
  require(ds.y_train.size() == ds.x_train.rows(), "y_train.npy", "length differs from X_train rows");
  require(ds.reps.rows() == n_c && ds.reps.cols() == d, "reps.npy", "shape must be (n_c, d)");
  require(ds.x_test.cols() == d || ds.x_test.rows() == 0, "X_test.npy", "column count differs from manifest d");
  require(ds.y_test.size() == ds.x_test.rows(), "y_test.npy", "length differs from X_test rows");
  require(out.probes.z.rows() == ds.x_train.rows() && out.probes.z.cols() >= 1, "probes.npy",
          "shape must be (n_train, m)");
  if (kv.has("n_train")) require(kv.get_int("n_train") == ds.x_train.rows(), "manifest.txt", "n_train mismatch");
  if (kv.has("probes")) require(kv.get_int("probes") == out.probes.z.cols(), "manifest.txt", "probe count mismatch");
  for (Eigen::Index i = 0; i < out.probes.z.size(); ++i) {
    const Scalar v = out.probes.z.data()[i];
    require(v == Scalar(1) || v == Scalar(-1), "probes.npy", "entries must be +1 or -1");
  }
  out.initial_hp = hyperparameters_from<Scalar>(kv);
  out.manifest = kv;
  return out;
}

}  // namespace blockgp
