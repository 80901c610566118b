#pragma once

// Text records written by the command-line tool: one key=value line per
// training epoch, and a run manifest per invocation.

#include "blockgp/bundle.hpp"
#include "blockgp/train.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace blockgp {

template <typename Scalar>
std::string epoch_line(const EpochRecord<Scalar>& r) {
  const auto f = [](double v) { return KeyValues::format(v); };
  std::string line = "epoch=" + std::to_string(r.epoch) + " loss=" + f(r.loss);
  for (int i = 0; i < 3; ++i) {
    line += std::string(" ") + kHyperparameterNames[i] + "=" + f(static_cast<double>(r.hp.get(i)));
  }
  for (int i = 0; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    line += std::string(" grad_") + kHyperparameterNames[i] + "=" + f(r.grads[k]);
    line += std::string(" halvings_") + kHyperparameterNames[i] + "=" + std::to_string(r.halvings[k]);
    if (!r.grad_converged[k]) line += std::string(" unconverged_") + kHyperparameterNames[i] + "=1";
  }
  line += " pcg_max=" + std::to_string(r.pcg_max) + " pcg_mean=" + f(r.pcg_mean);
  line += " factorizations=" + std::to_string(r.factorizations) + " jitter=" + f(r.jitter);
  return line;
}

template <typename Scalar>
void write_train_report(const std::filesystem::path& path, const TrainReport<Scalar>& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot open for writing");
  for (const auto& rec : report.epochs) out << epoch_line(rec) << "\n";
}

/// What was run, with which inputs and settings, and how long it took.
struct RunManifest {
  std::string command;
  KeyValues config;
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;
  std::string version;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
  KeyValues timing;  // seconds per phase

  void time_phase(const std::string& name, std::chrono::steady_clock::time_point since) {
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - since;
    timing.set(name, d.count());
  }

  void save(const std::filesystem::path& path) const {
    KeyValues kv;
    kv.set("command", command);
    kv.set("version", version);
    kv.set("seed", seed);
    for (std::size_t i = 0; i < inputs.size(); ++i) kv.set("input." + std::to_string(i), inputs[i]);
    for (const auto& [k, v] : config.entries()) kv.set("config." + k, v);
    for (const auto& [k, v] : timing.entries()) kv.set("seconds." + k, v);
    const std::chrono::duration<double> total = std::chrono::steady_clock::now() - started;
    kv.set("seconds.total", total.count());
    kv.save(path);
  }
};

}  // namespace blockgp
