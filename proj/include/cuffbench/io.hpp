#pragma once

// File formats: recording container, nerve model and section files, cuff
// layout and protocol configuration, session log lines, and comma-separated
// tables. Byte layouts are documented in docs/formats.md.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "cuffbench/anatomy.hpp"
#include "cuffbench/histology.hpp"
#include "cuffbench/protocol.hpp"
#include "cuffbench/recording.hpp"
#include "cuffbench/selectivity.hpp"

namespace cuffbench {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Recording container

inline constexpr int kContainerVersion = 1;
inline constexpr std::string_view kContainerMagic = "CUFFREC";

void write_recording(const Recording& recording, std::ostream& out);
/// Throws ParseError (location "byte <offset>") on a bad magic, unsupported
/// version, malformed header, count mismatch or trailing bytes.
Recording read_recording(std::istream& in);

void save_recording(const Recording& recording, const std::filesystem::path& path);
Recording load_recording(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Tables

enum class ColumnType { Text, Integer, Real };

struct Column {
  std::string name;
  ColumnType type = ColumnType::Text;
};

using TableSchema = std::vector<Column>;
using Cell = std::variant<std::string, std::int64_t, double>;
using Row = std::vector<Cell>;

/// Header row of column names, then one line per row. Reals use the shortest
/// representation that parses back to the same double. Throws DomainError
/// naming the column when a row does not conform to the schema.
void export_table(std::span<const Row> rows, const TableSchema& schema, std::ostream& out);
/// Inverse of export_table. Throws ParseError ("line N, column NAME").
std::vector<Row> parse_table(std::istream& in, const TableSchema& schema);

void write_table_file(std::span<const Row> rows, const TableSchema& schema, const std::filesystem::path& path);
std::vector<Row> read_table_file(const std::filesystem::path& path, const TableSchema& schema);

namespace schemas {
const TableSchema& curves();       // muscle, config, amplitude_uA, p2p_uV, normalized
const TableSchema& polar();        // intensity_uA, config_angle_deg, muscle, recruitment, radius
const TableSchema& selectivity();  // rank, config, amplitude_uA, target, selectivity_index, target_recruitment
const TableSchema& truth();        // config, amplitude_uA, muscle, fraction
const TableSchema& correspondence();  // relation, id_a, id_b
const TableSchema& fiber_stats();  // rank, fascicle_id, motor_fiber_count, area_um2, density_per_mm2
const TableSchema& pattern();      // config, contact, numerator, denominator
}  // namespace schemas

std::vector<Row> curve_rows(std::span<const RecruitmentCurve> curves);
std::vector<RecruitmentCurve> curves_from_rows(std::span<const Row> rows, NormalizationScope scope);
std::vector<Row> polar_rows(const PolarMap& map);
std::vector<Row> selectivity_rows(std::span<const SelectivityRecord> records);
std::vector<Row> correspondence_rows(const SectionCorrespondence& correspondence);
std::vector<Row> fiber_stats_rows(const MotorFiberStats& stats);
std::vector<Row> pattern_rows(std::span<const StimConfig> configs);

// ---------------------------------------------------------------------------
// Structured-text documents (JSON)

Json to_json(const CuffLayout& layout);
CuffLayout cuff_layout_from_json(const Json& j);
CuffLayout read_cuff_layout_file(const std::filesystem::path& path);

Json to_json(const PulseSpec& spec);
PulseSpec pulse_spec_from_json(const Json& j);
Json to_json(const RampSpec& spec);
RampSpec ramp_spec_from_json(const Json& j);

Json to_json(const FascicleSection& section);
FascicleSection section_from_json(const Json& j);
FascicleSection parse_section(const std::string& text);
FascicleSection read_section_file(const std::filesystem::path& path);
void write_section_file(const FascicleSection& section, const std::filesystem::path& path);

/// Nerve model document. When "fibers" is absent but "fiber_params" is
/// present, fibers are sampled from the section with the model seed.
Json to_json(const NerveModel& model);
NerveModel nerve_model_from_json(const Json& j);
NerveModel parse_nerve_model(const std::string& text);
NerveModel read_nerve_model_file(const std::filesystem::path& path);
void write_nerve_model_file(const NerveModel& model, const std::filesystem::path& path);

/// Parses a whole document, mapping syntax errors to ParseError("byte N").
Json parse_json_document(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Session log: one JSON object per line.

struct SessionLogEntry {
  std::uint64_t seq = 0;
  std::string timestamp;
  std::string kind;  // "transition" | "step" | "note"
  std::string from_state;
  std::string to_state;
  Json payload = Json::object();

  bool operator==(const SessionLogEntry&) const = default;
};

std::string format_log_line(const SessionLogEntry& entry);
SessionLogEntry parse_log_line(const std::string& line);
std::vector<SessionLogEntry> read_session_log(std::istream& in);
std::vector<SessionLogEntry> read_session_log_file(const std::filesystem::path& path);

}  // namespace cuffbench
