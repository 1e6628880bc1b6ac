#pragma once

#include <string>
#include <vector>

#include "noisemap/container.hpp"
#include "noisemap/flow.hpp"
#include "noisemap/metrics.hpp"
#include "noisemap/operators.hpp"
#include "noisemap/phantom.hpp"

namespace noisemap::io {

/// Operator payload ("<prefix>/entries") plus channels, grid and frequency
/// index set in the container metadata.
void write_operator(Container& c, const std::string& prefix, const op::ForwardOperator& fwd);
op::ForwardOperator read_operator(const Container& c, const std::string& prefix);

/// Measurement tuple batch: "<prefix>/x", "/y", "/eta", "/y_delta" arrays and
/// the concentration in the metadata. All tuples must share the concentration.
void write_tuples(Container& c, const std::string& prefix, const std::vector<phantom::MeasurementTuple>& tuples,
                  const std::string& seed_note = "");
std::vector<phantom::MeasurementTuple> read_tuples(const Container& c, const std::string& prefix);

void write_noise_bank(Container& c, const std::string& name, const std::vector<phantom::NoiseSample>& bank,
                      const std::string& seed_note = "");
std::vector<phantom::NoiseSample> read_noise_bank(const Container& c, const std::string& name);

/// Flow checkpoint: layout + parameter vector, `flow_format = 1` manifest
/// field, optional per-epoch loss history.
void save_flow(const std::filesystem::path& dir, const flow::FlowModel& model,
               const std::vector<flow::EpochStats>& history = {});
flow::FlowModel load_flow(const std::filesystem::path& dir);

/// Report output: machine-readable container arrays plus a report.txt table.
void write_report(const std::filesystem::path& dir, const metrics::ReconstructionReport& report,
                  const metrics::MetricConfig& cfg);

}  // namespace noisemap::io
