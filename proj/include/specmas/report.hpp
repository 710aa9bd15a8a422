#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "specmas/maslov.hpp"

namespace specmas {

using Json = nlohmann::ordered_json;

// Complex scalars serialize as [re, im]; matrices as row-major nested arrays.
Json complex_to_json(const cplx& z);
cplx json_to_complex(const Json& j);
Json mat_to_json(const Mat& m);
Mat json_to_mat(const Json& j);

Json flow_computation_to_json(const FlowComputation& fc);

struct FlowReport {
    std::string label;
    int sf_partition = 0;
    int sf_oracle = 0;
    int maslov_partition = 0;
    std::optional<int> maslov_crossings;
    int gsff_lhs = 0;
    int gsff_rhs = 0;
    bool equal = false; // sf == -mas
    bool oracle_agrees = false;
    std::vector<CrossingRecordMas> crossings;
    double cauchy_gap_max = 0.0;        // at s_samples
    double cauchy_gap_max_double = 0.0; // at 2 * s_samples
    bool ucp_ok = false;
    double ucp_min_singular_value = 0.0;
    uint64_t seed = 0;
    Json tolerances;
    std::optional<double> runtime_ms; // populated only when timing is requested
};

Json report_to_json(const FlowReport& r);
Json tolerances_to_json(const Tolerances& t);

// CSV with header row, UTF-8, LF line endings.  Cells are preformatted.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

} // namespace specmas
