#include "cuffbench/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "cuffbench/errors.hpp"

namespace cuffbench {

namespace {

// --- JSON field helpers ----------------------------------------------------

std::string child(const std::string& path, const std::string& key) { return path + "/" + key; }
std::string child(const std::string& path, std::size_t index) { return path + "/" + std::to_string(index); }

const Json& require(const Json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError("expected an object", path.empty() ? "/" : path);
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", path.empty() ? "/" : path);
  return *it;
}

double as_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ParseError("expected a number", path);
  return v.get<double>();
}

std::string as_text(const Json& v, const std::string& path) {
  if (!v.is_string()) throw ParseError("expected a string", path);
  return v.get<std::string>();
}

std::int64_t as_integer(const Json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ParseError("expected an integer", path);
  return v.get<std::int64_t>();
}

const Json& as_array(const Json& v, const std::string& path) {
  if (!v.is_array()) throw ParseError("expected an array", path);
  return v;
}

Point2 as_point(const Json& v, const std::string& path) {
  as_array(v, path);
  if (v.size() != 2) throw ParseError("expected [x, y]", path);
  return {as_number(v[0], child(path, 0)), as_number(v[1], child(path, 1))};
}

void check_format(const Json& j, std::string_view format) {
  if (auto it = j.find("format"); it != j.end()) {
    if (!it->is_string() || it->get<std::string>() != format) {
      throw ParseError("expected format '" + std::string(format) + "'", "/format");
    }
  }
  if (auto it = j.find("version"); it != j.end()) {
    const auto v = as_integer(*it, "/version");
    if (v != 1) throw ParseError("unsupported version " + std::to_string(v), "/version");
  }
}

// --- little-endian float payload ------------------------------------------

void put_f32le(std::string& out, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFFu));
}

float get_f32le(const char* p) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<float>(u);
}

std::string byte_at(std::uint64_t offset) { return "byte " + std::to_string(offset); }

// nlohmann counts bytes from 1.
std::uint64_t json_offset(const nlohmann::json::parse_error& e) { return e.byte > 0 ? e.byte - 1 : 0; }

}  // namespace

// ---------------------------------------------------------------------------
// Recording container

void write_recording(const Recording& recording, std::ostream& out) {
  recording.validate();
  Json header;
  header["format_version"] = kContainerVersion;
  header["sample_rate_hz"] = recording.sample_rate_hz;
  Json labels = Json::array();
  for (const auto& ch : recording.channels) labels.push_back(ch.muscle);
  header["channels"] = labels;
  header["sample_count"] = recording.sample_count();
  Json events = Json::array();
  for (const auto& ev : recording.stim_events) {
    events.push_back({{"sample", ev.sample}, {"amplitude_uA", ev.amplitude_ua}, {"pulse_index", ev.pulse_index}});
  }
  header["stim_events"] = events;
  const auto& md = recording.metadata;
  Json extra = Json::object();
  for (const auto& [k, v] : md.extra) extra[k] = v;
  header["metadata"] = {{"subject_id", md.subject_id},
                        {"config_id", md.config_id},
                        {"timestamp", md.timestamp},
                        {"acquisition_gain", md.acquisition_gain},
                        {"extra", extra}};
  const std::string text = header.dump();

  std::string payload;
  const std::size_t n = recording.sample_count();
  payload.reserve(n * recording.channels.size() * 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& ch : recording.channels) put_f32le(payload, ch.samples_uv[i]);
  }
  out << kContainerMagic << ' ' << kContainerVersion << '\n' << text.size() << '\n';
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("failed to write recording container");
}

Recording read_recording(std::istream& in) {
  std::uint64_t offset = 0;

  auto read_line = [&](std::size_t max_len) {
    std::string line;
    char c = 0;
    while (in.get(c)) {
      ++offset;
      if (c == '\n') return line;
      line.push_back(c);
      if (line.size() > max_len) throw ParseError("header line too long", byte_at(offset));
    }
    throw ParseError("unexpected end of container", byte_at(offset));
  };

  const std::string magic_line = read_line(32);
  const std::string prefix = std::string(kContainerMagic) + " ";
  if (!magic_line.starts_with(prefix)) throw ParseError("not a recording container", byte_at(0));
  int version = 0;
  const char* vbeg = magic_line.data() + prefix.size();
  const char* vend = magic_line.data() + magic_line.size();
  if (auto [p, ec] = std::from_chars(vbeg, vend, version); ec != std::errc{} || p != vend) {
    throw ParseError("malformed container version", byte_at(prefix.size()));
  }
  if (version != kContainerVersion) {
    throw ParseError("unsupported container version " + std::to_string(version), byte_at(prefix.size()));
  }

  const std::uint64_t len_offset = offset;
  const std::string len_line = read_line(20);
  std::uint64_t header_len = 0;
  if (auto [p, ec] = std::from_chars(len_line.data(), len_line.data() + len_line.size(), header_len);
      ec != std::errc{} || p != len_line.data() + len_line.size() || len_line.empty()) {
    throw ParseError("malformed header length", byte_at(len_offset));
  }
  if (header_len > (64u << 20)) throw ParseError("header length out of range", byte_at(len_offset));

  const std::uint64_t header_offset = offset;
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (static_cast<std::uint64_t>(in.gcount()) != header_len) {
    throw ParseError("truncated header", byte_at(header_offset + static_cast<std::uint64_t>(in.gcount())));
  }
  offset += header_len;

  Json h;
  try {
    h = Json::parse(header_text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed header: ") + e.what(), byte_at(header_offset + json_offset(e)));
  }

  Recording rec;
  std::size_t count = 0;
  try {
    const auto fv = as_integer(require(h, "format_version", ""), "/format_version");
    if (fv != kContainerVersion) throw ParseError("header version disagrees with container", "/format_version");
    rec.sample_rate_hz = as_number(require(h, "sample_rate_hz", ""), "/sample_rate_hz");
    const auto& labels = as_array(require(h, "channels", ""), "/channels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      rec.channels.push_back({as_text(labels[i], child("/channels", i)), {}});
    }
    const auto declared = as_integer(require(h, "sample_count", ""), "/sample_count");
    if (declared < 0) throw ParseError("negative sample count", "/sample_count");
    count = static_cast<std::size_t>(declared);
    const auto& events = as_array(require(h, "stim_events", ""), "/stim_events");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const std::string p = child("/stim_events", i);
      StimEvent ev;
      ev.sample = as_integer(require(events[i], "sample", p), child(p, "sample"));
      ev.amplitude_ua = as_number(require(events[i], "amplitude_uA", p), child(p, "amplitude_uA"));
      ev.pulse_index = static_cast<int>(as_integer(require(events[i], "pulse_index", p), child(p, "pulse_index")));
      rec.stim_events.push_back(ev);
    }
    const auto& md = require(h, "metadata", "");
    rec.metadata.subject_id = as_text(require(md, "subject_id", "/metadata"), "/metadata/subject_id");
    rec.metadata.config_id = as_text(require(md, "config_id", "/metadata"), "/metadata/config_id");
    rec.metadata.timestamp = as_text(require(md, "timestamp", "/metadata"), "/metadata/timestamp");
    rec.metadata.acquisition_gain =
        as_number(require(md, "acquisition_gain", "/metadata"), "/metadata/acquisition_gain");
    if (auto it = md.find("extra"); it != md.end()) {
      if (!it->is_object()) throw ParseError("expected an object", "/metadata/extra");
      for (const auto& [k, v] : it->items()) rec.metadata.extra[k] = as_text(v, "/metadata/extra/" + k);
    }
  } catch (const ParseError& e) {
    throw ParseError(std::string("invalid header: ") + e.what(), byte_at(header_offset));
  }

  const std::uint64_t payload_offset = offset;
  const std::uint64_t nch = rec.channels.size();
  if (nch > 0 && count > (std::uint64_t{1} << 40) / (4 * nch)) {
    throw ParseError("declared sample count out of range", byte_at(header_offset));
  }
  const std::uint64_t want = count * nch * 4;
  std::string payload(want, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(want));
  const auto got = static_cast<std::uint64_t>(in.gcount());
  if (got != want) {
    throw ParseError("sample count mismatch: header declares " + std::to_string(count) + " samples x " +
                         std::to_string(nch) + " channels, payload holds " + std::to_string(got) + " of " +
                         std::to_string(want) + " bytes",
                     byte_at(payload_offset + got));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes after declared payload", byte_at(payload_offset + want));
  }
  for (auto& ch : rec.channels) ch.samples_uv.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t c = 0; c < nch; ++c) {
      rec.channels[c].samples_uv[i] = get_f32le(payload.data() + 4 * (i * nch + c));
    }
  }
  try {
    rec.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("inconsistent recording: ") + e.what(), byte_at(header_offset));
  }
  return rec;
}

void save_recording(const Recording& recording, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_recording(recording, out);
}

Recording load_recording(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_recording(in);
}

// ---------------------------------------------------------------------------
// Tables

namespace {

std::string_view type_name(ColumnType t) {
  switch (t) {
    case ColumnType::Text:
      return "text";
    case ColumnType::Integer:
      return "integer";
    case ColumnType::Real:
      return "real";
  }
  return "?";
}

bool cell_matches(const Cell& c, ColumnType t) {
  switch (t) {
    case ColumnType::Text:
      return std::holds_alternative<std::string>(c);
    case ColumnType::Integer:
      return std::holds_alternative<std::int64_t>(c);
    case ColumnType::Real:
      return std::holds_alternative<double>(c);
  }
  return false;
}

std::string format_real(double v) {
  std::array<char, 64> buf{};
  auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), p);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Splits one logical CSV record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
  fields.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  char c = 0;
  ++line_no;
  const std::size_t first_line = line_no;
  while (in.get(c)) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", "line " + std::to_string(first_line));
  if (any) fields.push_back(std::move(field));
  return any;
}

}  // namespace

void export_table(std::span<const Row> rows, const TableSchema& schema, std::ostream& out) {
  for (std::size_t i = 0; i < schema.size(); ++i) out << (i ? "," : "") << csv_field(schema[i].name);
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Row& row = rows[r];
    if (row.size() != schema.size()) {
      throw DomainError("row " + std::to_string(r) + " has " + std::to_string(row.size()) + " cells, schema has " +
                        std::to_string(schema.size()) + " columns (first missing column '" +
                        (row.size() < schema.size() ? schema[row.size()].name : std::string("<extra>")) + "')");
    }
    for (std::size_t i = 0; i < schema.size(); ++i) {
      if (!cell_matches(row[i], schema[i].type)) {
        throw DomainError("row " + std::to_string(r) + ": column '" + schema[i].name + "' expects " +
                          std::string(type_name(schema[i].type)));
      }
      if (i) out << ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) {
              out << csv_field(v);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
              out << v;
            } else {
              out << format_real(v);
            }
          },
          row[i]);
    }
    out << '\n';
  }
}

std::vector<Row> parse_table(std::istream& in, const TableSchema& schema) {
  std::vector<std::string> fields;
  std::size_t line_no = 0;
  if (!read_record(in, fields, line_no)) throw ParseError("missing header row", "line 1");
  if (fields.size() != schema.size()) throw ParseError("header has wrong column count", "line 1");
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (fields[i] != schema[i].name) {
      throw ParseError("expected column '" + schema[i].name + "', found '" + fields[i] + "'",
                       "line 1, column " + schema[i].name);
    }
  }
  std::vector<Row> rows;
  while (read_record(in, fields, line_no)) {
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != schema.size()) throw ParseError("wrong number of fields", where);
    Row row;
    for (std::size_t i = 0; i < schema.size(); ++i) {
      const std::string& f = fields[i];
      const std::string loc = where + ", column " + schema[i].name;
      switch (schema[i].type) {
        case ColumnType::Text:
          row.emplace_back(f);
          break;
        case ColumnType::Integer: {
          std::int64_t v = 0;
          auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
          if (ec != std::errc{} || p != f.data() + f.size() || f.empty()) throw ParseError("expected integer", loc);
          row.emplace_back(v);
          break;
        }
        case ColumnType::Real: {
          double v = 0.0;
          auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
          if (ec != std::errc{} || p != f.data() + f.size() || f.empty()) throw ParseError("expected number", loc);
          row.emplace_back(v);
          break;
        }
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_table_file(std::span<const Row> rows, const TableSchema& schema, const std::filesystem::path& path) {
  std::ostringstream os;
  export_table(rows, schema, os);
  write_text_file(path, os.str());
}

std::vector<Row> read_table_file(const std::filesystem::path& path, const TableSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_table(in, schema);
}

namespace schemas {

const TableSchema& curves() {
  static const TableSchema s{{"muscle", ColumnType::Text},
                             {"config", ColumnType::Text},
                             {"amplitude_uA", ColumnType::Real},
                             {"p2p_uV", ColumnType::Real},
                             {"normalized", ColumnType::Real}};
  return s;
}

const TableSchema& polar() {
  static const TableSchema s{{"intensity_uA", ColumnType::Real},
                             {"config_angle_deg", ColumnType::Real},
                             {"muscle", ColumnType::Text},
                             {"recruitment", ColumnType::Real},
                             {"radius", ColumnType::Real}};
  return s;
}

const TableSchema& selectivity() {
  static const TableSchema s{{"rank", ColumnType::Integer},          {"config", ColumnType::Text},
                             {"amplitude_uA", ColumnType::Real},     {"target", ColumnType::Text},
                             {"selectivity_index", ColumnType::Real}, {"target_recruitment", ColumnType::Real}};
  return s;
}

const TableSchema& truth() {
  static const TableSchema s{{"config", ColumnType::Text},
                             {"amplitude_uA", ColumnType::Real},
                             {"muscle", ColumnType::Text},
                             {"fraction", ColumnType::Real}};
  return s;
}

const TableSchema& correspondence() {
  static const TableSchema s{{"relation", ColumnType::Text}, {"id_a", ColumnType::Text}, {"id_b", ColumnType::Text}};
  return s;
}

const TableSchema& fiber_stats() {
  static const TableSchema s{{"rank", ColumnType::Integer},
                             {"fascicle_id", ColumnType::Text},
                             {"motor_fiber_count", ColumnType::Real},
                             {"area_um2", ColumnType::Real},
                             {"density_per_mm2", ColumnType::Real}};
  return s;
}

const TableSchema& pattern() {
  static const TableSchema s{{"config", ColumnType::Text},
                             {"contact", ColumnType::Text},
                             {"numerator", ColumnType::Integer},
                             {"denominator", ColumnType::Integer}};
  return s;
}

}  // namespace schemas

std::vector<Row> curve_rows(std::span<const RecruitmentCurve> curves) {
  std::vector<Row> rows;
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      rows.push_back({c.muscle, c.config.name(), p.amplitude_ua, p.mean_p2p_uv, p.normalized});
    }
  }
  return rows;
}

std::vector<RecruitmentCurve> curves_from_rows(std::span<const Row> rows, NormalizationScope scope) {
  std::vector<RecruitmentCurve> curves;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& row : rows) {
    const auto& muscle = std::get<std::string>(row.at(0));
    const auto& config = std::get<std::string>(row.at(1));
    auto [it, inserted] = index.try_emplace({muscle, config}, curves.size());
    if (inserted) {
      RecruitmentCurve c;
      c.muscle = muscle;
      c.config = StimConfig::from_name(config);
      c.scope = scope;
      curves.push_back(std::move(c));
    }
    curves[it->second].points.push_back(
        {std::get<double>(row.at(2)), std::get<double>(row.at(3)), std::get<double>(row.at(4))});
  }
  for (auto& c : curves) {
    bool any = false;
    for (const auto& p : c.points) any = any || p.normalized > 0.0;
    c.normalizable = any || c.points.empty();
  }
  return curves;
}

std::vector<Row> polar_rows(const PolarMap& map) {
  std::vector<Row> rows;
  for (const auto& slice : map.slices) {
    for (const auto& spoke : slice.spokes) {
      for (const auto& [muscle, r] : spoke.recruitment) {
        rows.push_back({slice.amplitude_ua, spoke.angle_deg, muscle, r, polar_radius(r)});
      }
    }
  }
  return rows;
}

std::vector<Row> selectivity_rows(std::span<const SelectivityRecord> records) {
  std::vector<Row> rows;
  std::int64_t rank = 1;
  for (const auto& r : records) {
    rows.push_back({rank++, r.config.name(), r.amplitude_ua, r.target, r.selectivity_index, r.target_recruitment});
  }
  return rows;
}

std::vector<Row> correspondence_rows(const SectionCorrespondence& c) {
  std::vector<Row> rows;
  for (const auto& [a, b] : c.matches) rows.push_back({std::string("match"), a, b});
  for (const auto& s : c.splits) {
    for (const auto& child_id : s.children) rows.push_back({std::string("split"), s.parent, child_id});
  }
  for (const auto& a : c.unmatched_a) rows.push_back({std::string("unmatched_a"), a, std::string()});
  for (const auto& b : c.unmatched_b) rows.push_back({std::string("unmatched_b"), std::string(), b});
  return rows;
}

std::vector<Row> fiber_stats_rows(const MotorFiberStats& stats) {
  std::vector<Row> rows;
  std::int64_t rank = 1;
  for (const auto& d : stats.ranking) {
    rows.push_back({rank++, d.id, d.motor_fiber_count, d.area_um2, d.density_per_um2 * 1e6});
  }
  return rows;
}

std::vector<Row> pattern_rows(std::span<const StimConfig> configs) {
  std::vector<Row> rows;
  for (const auto& cfg : configs) {
    for (const auto& pr : pattern_table(cfg.pattern)) rows.push_back({cfg.name(), pr.contact, pr.numerator, pr.denominator});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// JSON documents

Json parse_json_document(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed document: ") + e.what(), byte_at(json_offset(e)));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Json to_json(const CuffLayout& layout) {
  return {{"inner_diameter_um", layout.inner_diameter_um},
          {"central_contact_angles_deg", layout.central_angles_deg},
          {"distal_offset_um", layout.distal_offset_um},
          {"proximal_offset_um", layout.proximal_offset_um}};
}

CuffLayout cuff_layout_from_json(const Json& j) {
  CuffLayout c;
  if (!j.is_object()) throw ParseError("expected an object", "/");
  if (auto it = j.find("inner_diameter_um"); it != j.end()) c.inner_diameter_um = as_number(*it, "/inner_diameter_um");
  if (auto it = j.find("central_contact_angles_deg"); it != j.end()) {
    as_array(*it, "/central_contact_angles_deg");
    if (it->size() != kCentralContacts) throw ParseError("expected six angles", "/central_contact_angles_deg");
    for (std::size_t k = 0; k < kCentralContacts; ++k) {
      c.central_angles_deg[k] = as_number((*it)[k], child("/central_contact_angles_deg", k));
    }
  }
  if (auto it = j.find("ring_offset_um"); it != j.end()) {
    const double off = as_number(*it, "/ring_offset_um");
    c.distal_offset_um = off;
    c.proximal_offset_um = -off;
  }
  if (auto it = j.find("distal_offset_um"); it != j.end()) c.distal_offset_um = as_number(*it, "/distal_offset_um");
  if (auto it = j.find("proximal_offset_um"); it != j.end()) {
    c.proximal_offset_um = as_number(*it, "/proximal_offset_um");
  }
  try {
    c.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), "/");
  }
  return c;
}

CuffLayout read_cuff_layout_file(const std::filesystem::path& path) {
  return cuff_layout_from_json(parse_json_document(read_text_file(path)));
}

Json to_json(const PulseSpec& s) {
  return {{"cathodic_phase_width_us", s.cathodic_phase_width_us},
          {"asymmetry_ratio", s.asymmetry_ratio},
          {"frequency_hz", s.frequency_hz},
          {"amplitude_uA", s.amplitude_ua}};
}

PulseSpec pulse_spec_from_json(const Json& j) {
  PulseSpec s;
  if (!j.is_object()) throw ParseError("expected an object", "/pulse");
  if (auto it = j.find("cathodic_phase_width_us"); it != j.end()) s.cathodic_phase_width_us = as_number(*it, "/pulse/cathodic_phase_width_us");
  if (auto it = j.find("asymmetry_ratio"); it != j.end()) s.asymmetry_ratio = as_number(*it, "/pulse/asymmetry_ratio");
  if (auto it = j.find("frequency_hz"); it != j.end()) s.frequency_hz = as_number(*it, "/pulse/frequency_hz");
  if (auto it = j.find("amplitude_uA"); it != j.end()) s.amplitude_ua = as_number(*it, "/pulse/amplitude_uA");
  return s;
}

Json to_json(const RampSpec& s) {
  return {{"start_amplitude_uA", s.start_amplitude_ua},
          {"step_uA", s.step_ua},
          {"step_duration_s", s.step_duration_s},
          {"pulses_per_step", s.pulses_per_step},
          {"saturation", {{"window_steps", s.saturation.window}, {"epsilon", s.saturation.epsilon}}},
          {"max_amplitude_uA", s.max_amplitude_ua}};
}

RampSpec ramp_spec_from_json(const Json& j) {
  RampSpec s;
  if (!j.is_object()) throw ParseError("expected an object", "/ramp");
  if (auto it = j.find("start_amplitude_uA"); it != j.end()) s.start_amplitude_ua = as_number(*it, "/ramp/start_amplitude_uA");
  if (auto it = j.find("step_uA"); it != j.end()) s.step_ua = as_number(*it, "/ramp/step_uA");
  if (auto it = j.find("step_duration_s"); it != j.end()) s.step_duration_s = as_number(*it, "/ramp/step_duration_s");
  if (auto it = j.find("pulses_per_step"); it != j.end()) {
    s.pulses_per_step = static_cast<int>(as_integer(*it, "/ramp/pulses_per_step"));
  }
  if (auto it = j.find("saturation"); it != j.end()) {
    if (auto w = it->find("window_steps"); w != it->end()) {
      s.saturation.window = static_cast<int>(as_integer(*w, "/ramp/saturation/window_steps"));
    }
    if (auto e = it->find("epsilon"); e != it->end()) s.saturation.epsilon = as_number(*e, "/ramp/saturation/epsilon");
  }
  if (auto it = j.find("max_amplitude_uA"); it != j.end()) s.max_amplitude_ua = as_number(*it, "/ramp/max_amplitude_uA");
  return s;
}

Json to_json(const FascicleSection& section) {
  Json fasc = Json::array();
  for (const auto& f : section.fascicles) {
    Json e = {{"id", f.id}, {"centroid_um", {f.centroid_um.x, f.centroid_um.y}}, {"area_um2", f.area_um2}};
    if (f.motor_fiber_count) e["motor_fiber_count"] = *f.motor_fiber_count;
    if (!f.contour_um.empty()) {
      Json poly = Json::array();
      for (const auto& p : f.contour_um) poly.push_back({p.x, p.y});
      e["contour_um"] = poly;
    }
    fasc.push_back(e);
  }
  return {{"format", "cuffbench-section"}, {"version", 1}, {"z_um", section.z_um}, {"fascicles", fasc}};
}

namespace {

FascicleSection section_from_json_at(const Json& j, const std::string& base) {
  FascicleSection s;
  s.z_um = as_number(require(j, "z_um", base), child(base, "z_um"));
  const std::string fpath = child(base, "fascicles");
  const auto& arr = as_array(require(j, "fascicles", base), fpath);
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child(fpath, i);
    Fascicle f;
    f.id = as_text(require(arr[i], "id", p), child(p, "id"));
    if (f.id.empty()) throw ParseError("empty fascicle id", child(p, "id"));
    if (auto [it, ok] = seen.emplace(f.id, i); !ok) {
      throw ParseError("duplicate fascicle id '" + f.id + "' (first at index " + std::to_string(it->second) + ")",
                       child(p, "id"));
    }
    f.centroid_um = as_point(require(arr[i], "centroid_um", p), child(p, "centroid_um"));
    f.area_um2 = as_number(require(arr[i], "area_um2", p), child(p, "area_um2"));
    if (!(f.area_um2 > 0.0)) throw ParseError("fascicle area must be positive", child(p, "area_um2"));
    if (auto it = arr[i].find("motor_fiber_count"); it != arr[i].end() && !it->is_null()) {
      f.motor_fiber_count = as_number(*it, child(p, "motor_fiber_count"));
      if (*f.motor_fiber_count < 0.0) throw ParseError("negative motor fiber count", child(p, "motor_fiber_count"));
    }
    if (auto it = arr[i].find("contour_um"); it != arr[i].end() && !it->is_null()) {
      const std::string cp = child(p, "contour_um");
      as_array(*it, cp);
      for (std::size_t k = 0; k < it->size(); ++k) f.contour_um.push_back(as_point((*it)[k], child(cp, k)));
      if (f.contour_um.size() < 3) throw ParseError("contour needs at least 3 points", cp);
    }
    s.fascicles.push_back(std::move(f));
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), fpath);
  }
  return s;
}

}  // namespace

FascicleSection section_from_json(const Json& j) {
  check_format(j, "cuffbench-section");
  return section_from_json_at(j, "");
}

FascicleSection parse_section(const std::string& text) { return section_from_json(parse_json_document(text)); }

FascicleSection read_section_file(const std::filesystem::path& path) { return parse_section(read_text_file(path)); }

void write_section_file(const FascicleSection& section, const std::filesystem::path& path) {
  write_text_file(path, to_json(section).dump(2) + "\n");
}

Json to_json(const NerveModel& model) {
  Json section = to_json(model.cross_section);
  section.erase("format");
  section.erase("version");
  Json map = Json::object();
  for (const auto& [fid, weights] : model.fascicle_muscle_map) {
    Json list = Json::array();
    for (const auto& mw : weights) list.push_back({{"muscle", mw.muscle}, {"weight", mw.weight}});
    map[fid] = list;
  }
  Json fibers = Json::object();
  for (const auto& [fid, list] : model.fibers) {
    Json arr = Json::array();
    for (const auto& f : list) arr.push_back({f.position_um.x, f.position_um.y, f.threshold_v});
    fibers[fid] = arr;
  }
  return {{"format", "cuffbench-nerve"},
          {"version", 1},
          {"conductivity_S_per_m", model.conductivity_s_per_m},
          {"rng_seed", model.rng_seed},
          {"cuff", to_json(model.cuff)},
          {"muscles", model.muscles},
          {"section", section},
          {"fascicle_muscle_map", map},
          {"fibers", fibers}};
}

NerveModel nerve_model_from_json(const Json& j) {
  check_format(j, "cuffbench-nerve");
  const FascicleSection section = section_from_json_at(require(j, "section", ""), "/section");

  ModelAssembly assembly;
  if (auto it = j.find("cuff"); it != j.end()) {
    try {
      assembly.cuff = cuff_layout_from_json(*it);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), "/cuff");
    }
  }
  if (auto it = j.find("conductivity_S_per_m"); it != j.end()) {
    assembly.conductivity_s_per_m = as_number(*it, "/conductivity_S_per_m");
  }
  if (auto it = j.find("muscles"); it != j.end()) {
    as_array(*it, "/muscles");
    for (std::size_t i = 0; i < it->size(); ++i) assembly.muscles.push_back(as_text((*it)[i], child("/muscles", i)));
  }
  std::uint64_t seed = 0;
  if (auto it = j.find("rng_seed"); it != j.end()) {
    if (!it->is_number_unsigned() && !it->is_number_integer()) throw ParseError("expected an integer", "/rng_seed");
    seed = it->get<std::uint64_t>();
  }

  std::map<std::string, std::vector<MuscleWeight>> assignment;
  const auto& map = require(j, "fascicle_muscle_map", "");
  if (!map.is_object()) throw ParseError("expected an object", "/fascicle_muscle_map");
  for (const auto& [fid, list] : map.items()) {
    const std::string p = "/fascicle_muscle_map/" + fid;
    as_array(list, p);
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string ip = child(p, i);
      MuscleWeight mw;
      mw.muscle = as_text(require(list[i], "muscle", ip), child(ip, "muscle"));
      if (auto w = list[i].find("weight"); w != list[i].end()) mw.weight = as_number(*w, child(ip, "weight"));
      assignment[fid].push_back(mw);
    }
    if (section.find(fid) == nullptr) throw ParseError("mapped fascicle does not exist", p);
  }

  NerveModel model;
  if (auto it = j.find("fibers"); it != j.end()) {
    model.cross_section = section;
    model.cuff = assembly.cuff;
    model.conductivity_s_per_m = assembly.conductivity_s_per_m;
    model.fascicle_muscle_map = assignment;
    model.rng_seed = seed;
    model.muscles = assembly.muscles;
    std::set<MuscleId> known(model.muscles.begin(), model.muscles.end());
    for (const auto& [fid, list] : assignment) {
      for (const auto& mw : list) {
        if (known.insert(mw.muscle).second) model.muscles.push_back(mw.muscle);
      }
    }
    if (!it->is_object()) throw ParseError("expected an object", "/fibers");
    for (const auto& [fid, list] : it->items()) {
      const std::string p = "/fibers/" + fid;
      as_array(list, p);
      auto& dst = model.fibers[fid];
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string ip = child(p, i);
        as_array(list[i], ip);
        if (list[i].size() != 3) throw ParseError("expected [x, y, threshold_V]", ip);
        dst.push_back({{as_number(list[i][0], child(ip, 0)), as_number(list[i][1], child(ip, 1))},
                       as_number(list[i][2], child(ip, 2))});
      }
    }
  } else {
    const auto& fp = require(j, "fiber_params", "");
    FiberParams params;
    if (auto it2 = fp.find("fibers_per_count"); it2 != fp.end()) {
      params.fibers_per_count = as_number(*it2, "/fiber_params/fibers_per_count");
    }
    if (auto it2 = fp.find("threshold_median_V"); it2 != fp.end()) {
      params.threshold_median_v = as_number(*it2, "/fiber_params/threshold_median_V");
    }
    if (auto it2 = fp.find("threshold_log_sigma"); it2 != fp.end()) {
      params.threshold_log_sigma = as_number(*it2, "/fiber_params/threshold_log_sigma");
    }
    try {
      model = section_to_nerve_model(section, assignment, params, seed, assembly);
    } catch (const DomainError& e) {
      throw ParseError(e.what(), "/fiber_params");
    }
  }
  try {
    model.validate();
  } catch (const DomainError& e) {
    throw ParseError(e.what(), "/");
  }
  return model;
}

NerveModel parse_nerve_model(const std::string& text) { return nerve_model_from_json(parse_json_document(text)); }

NerveModel read_nerve_model_file(const std::filesystem::path& path) {
  return parse_nerve_model(read_text_file(path));
}

void write_nerve_model_file(const NerveModel& model, const std::filesystem::path& path) {
  write_text_file(path, to_json(model).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Session log

std::string format_log_line(const SessionLogEntry& e) {
  Json j = {{"seq", e.seq},           {"timestamp", e.timestamp}, {"kind", e.kind},
            {"from", e.from_state}, {"to", e.to_state},         {"payload", e.payload}};
  return j.dump();
}

SessionLogEntry parse_log_line(const std::string& line) {
  const Json j = parse_json_document(line);
  SessionLogEntry e;
  e.seq = static_cast<std::uint64_t>(as_integer(require(j, "seq", ""), "/seq"));
  e.timestamp = as_text(require(j, "timestamp", ""), "/timestamp");
  e.kind = as_text(require(j, "kind", ""), "/kind");
  e.from_state = as_text(require(j, "from", ""), "/from");
  e.to_state = as_text(require(j, "to", ""), "/to");
  e.payload = require(j, "payload", "");
  return e;
}

std::vector<SessionLogEntry> read_session_log(std::istream& in) {
  std::vector<SessionLogEntry> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_log_line(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), "line " + std::to_string(n));
    }
  }
  return out;
}

std::vector<SessionLogEntry> read_session_log_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_session_log(in);
}

}  // namespace cuffbench
