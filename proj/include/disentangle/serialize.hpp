#pragma once

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "disentangle/estimate.hpp"
#include "disentangle/infer.hpp"
#include "disentangle/model.hpp"

namespace disentangle {

/// 17 significant digits: doubles round-trip exactly through text.
std::string format_double(double v);

nlohmann::json scm_to_json(const SymmetricAnm& scm);
SymmetricAnm scm_from_json(const nlohmann::json& j);

/// CSV header: regime_id, c_0..c_{m-1}, x_0..x_{K-1}, i_0..i_{K-1}, y.
std::string dataset_to_csv(const Dataset& ds);
Dataset dataset_from_csv(const std::string& text, const std::string& filename = "<string>");

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

nlohmann::json fit_report_to_json(const FitReport& report);
FitReport fit_report_from_json(const nlohmann::json& j);

nlohmann::json query_to_json(const Query& q);
Query query_from_json(const nlohmann::json& j);

}  // namespace disentangle
