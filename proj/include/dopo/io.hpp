#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dopo/experiment.hpp"

namespace dopo {

// Shortest decimal representation that round-trips to the same double.
std::string format_double(double v);

// Writes series_<label>.csv per label, dist_<target>_<tau>.csv per
// distribution (label-prefixed when several labels carry distributions) and
// metadata.json. Returns the paths written.
std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result,
                                                 const std::filesystem::path& dir);

// CSV header for the requested series observables (stable column order).
std::string series_header(const OutputRequest& outputs);

std::string series_csv(const LabelResult& label, const OutputRequest& outputs);

std::string distribution_csv(const QuadratureDistribution& dist);

std::string metadata_json(const ExperimentResult& result);

} // namespace dopo
