#ifndef CDRA_SERIALIZE_HPP
#define CDRA_SERIALIZE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cdra/audit.hpp"
#include "cdra/gcm.hpp"
#include "cdra/graph.hpp"
#include "cdra/rendermap.hpp"

namespace cdra {

using Json = nlohmann::json;

/// Throws ParseError carrying the line of the offending byte.
Json parse_json(std::string_view text);
/// Throws IoError, ParseError.
Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Throws IoError.
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Two-space indented with sorted keys and a trailing newline.
std::string dump_canonical(const Json& value);
/// FNV-1a 64 as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Semantic decoding errors name the JSON path of the offending value.

Json to_json(const CausalDag& dag);
CausalDag dag_from_json(const Json& doc);

/// Optional "domains" object; factors not listed get the default domain.
std::map<FactorId, SeverityDomain> domains_from_json(const Json& doc, const CausalDag& dag);

Json to_json(const Gcm& gcm);
/// Accepts a GCM document; a graph without a sink gains "M" fed by every factor.
Gcm gcm_from_json(const Json& doc);

Json to_json(const AuditConfig& config);
Json to_json(const AceEstimate& estimate);
Json to_json(const AuditReport& report);
/// Inverse of to_json(AuditReport).
AuditReport report_from_json(const Json& doc);
Json to_json(const MisspecReport& report);
Json to_json(std::span<const MisspecSummary> summary);
Json to_json(std::span<const FactorComparison> rows);

/// {"factors": [{id, type, min, max, nominal, a, b, sigma, squash}],
///  "edges": [{parent, child, weight}], "weights": "fixed" | "sampled"}.
/// Sampled weights draw from `rng` in edge order.
RenderGraph render_graph_from_json(const Json& doc, Rng& rng);
Json to_json(const RenderGraph& graph);

}  // namespace cdra

#endif  // CDRA_SERIALIZE_HPP
