#include "metastd/record.hpp"

#include "metastd/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace metastd {

using nlohmann::ordered_json;

void MetadataRecord::add(std::string name, std::string value) {
  if (contains(name)) {
    throw ParseError("duplicate field name '" + name + "'");
  }
  fields_.push_back({std::move(name), std::move(value)});
}

void MetadataRecord::set(std::string_view name, std::string value) {
  if (auto i = index_of(name)) {
    fields_[*i].value = std::move(value);
  } else {
    fields_.push_back({std::string(name), std::move(value)});
  }
}

bool MetadataRecord::erase(std::string_view name) {
  auto i = index_of(name);
  if (!i) return false;
  fields_.erase(fields_.begin() + static_cast<std::ptrdiff_t>(*i));
  return true;
}

const std::string* MetadataRecord::find(std::string_view name) const {
  auto i = index_of(name);
  return i ? &fields_[*i].value : nullptr;
}

std::optional<std::size_t> MetadataRecord::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < fields_.size(); ++i) {
    if (fields_[i].name == name) return i;
  }
  return std::nullopt;
}

namespace {

std::string_view strip_bom(std::string_view raw) {
  if (raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
  return raw;
}

std::vector<std::string_view> split_lines(std::string_view raw) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  // Every newline ends a line, so "a\n" yields {"a", ""}.
  while (true) {
    std::size_t nl = raw.find('\n', start);
    std::size_t end = nl == std::string_view::npos ? raw.size() : nl;
    std::string_view line = raw.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cells.emplace_back(line.substr(start));
      return cells;
    }
    cells.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string make_id(const RecordParseOptions& options, std::size_t index,
                    bool single) {
  if (single) return options.fallback_id;
  return options.fallback_id + "-" + std::to_string(index + 1);
}

void assign_id(MetadataRecord& record, const RecordParseOptions& options,
               std::size_t index, bool single) {
  if (!options.id_key.empty()) {
    if (const std::string* v = record.find(options.id_key); v && !v->empty()) {
      record.set_id(*v);
      return;
    }
  }
  record.set_id(make_id(options, index, single));
}

std::vector<MetadataRecord> parse_tsv(std::string_view raw,
                                      const RecordParseOptions& options) {
  std::vector<MetadataRecord> records;
  if (raw.empty()) return records;
  auto lines = split_lines(raw);
  // A terminating newline does not open another row.
  if (lines.size() > 1 && lines.back().empty() && raw.back() == '\n') {
    lines.pop_back();
  }
  std::vector<std::string> header =
      lines[0].empty() ? std::vector<std::string>{} : split_tabs(lines[0]);
  std::set<std::string_view> seen;
  for (const auto& name : header) {
    if (name.empty()) throw ParseError("empty field name in TSV header");
    if (!seen.insert(name).second) {
      throw ParseError("duplicate field name '" + name + "' in TSV header");
    }
  }
  for (std::size_t row = 1; row < lines.size(); ++row) {
    std::vector<std::string> cells =
        header.empty() && lines[row].empty() ? std::vector<std::string>{}
                                             : split_tabs(lines[row]);
    if (cells.size() != header.size()) {
      throw ParseError("ragged TSV row " + std::to_string(row + 1) + ": " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    MetadataRecord record;
    for (std::size_t i = 0; i < header.size(); ++i) {
      record.add(header[i], std::move(cells[i]));
    }
    assign_id(record, options, records.size(), false);
    records.push_back(std::move(record));
  }
  return records;
}

// Parses one JSON text, rejecting duplicate keys anywhere in it.
ordered_json parse_json_strict(std::string_view text) {
  std::vector<std::set<std::string>> keys;
  ordered_json::parser_callback_t cb = [&keys](int, ordered_json::parse_event_t event,
                                               ordered_json& parsed) {
    using E = ordered_json::parse_event_t;
    if (event == E::object_start) {
      keys.emplace_back();
    } else if (event == E::object_end) {
      keys.pop_back();
    } else if (event == E::key) {
      const auto& k = parsed.get_ref<const std::string&>();
      if (!keys.back().insert(k).second) {
        throw ParseError("duplicate field name '" + k + "'");
      }
    }
    return true;
  };
  try {
    return ordered_json::parse(text.begin(), text.end(), cb);
  } catch (const ordered_json::exception& e) {
    throw ParseError(std::string("malformed document: ") + e.what());
  }
}

MetadataRecord record_from_json(const ordered_json& doc) {
  if (!doc.is_object()) {
    throw ParseError("malformed document: record must be a JSON object");
  }
  MetadataRecord record;
  for (const auto& [name, value] : doc.items()) {
    try {
      record.add(name, coerce_to_text(value));
    } catch (const ParseError& e) {
      throw ParseError("field '" + name + "': " + e.what());
    }
  }
  return record;
}

std::vector<MetadataRecord> parse_objects(std::string_view raw,
                                          const RecordParseOptions& options) {
  std::vector<ordered_json> docs;
  std::string_view body = text::trim(raw);
  if (body.empty()) return {};
  bool whole_ok = true;
  ordered_json whole;
  try {
    whole = parse_json_strict(body);
  } catch (const ParseError& e) {
    // Fall back to one document per line; duplicates are never recoverable.
    if (std::string_view(e.what()).starts_with("duplicate")) throw;
    whole_ok = false;
  }
  if (whole_ok) {
    if (whole.is_array()) {
      for (auto& d : whole) docs.push_back(std::move(d));
    } else {
      docs.push_back(std::move(whole));
    }
  } else {
    for (std::string_view line : split_lines(body)) {
      if (text::trim(line).empty()) continue;
      docs.push_back(parse_json_strict(line));
    }
  }
  std::vector<MetadataRecord> records;
  records.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    MetadataRecord record = record_from_json(docs[i]);
    assign_id(record, options, i, docs.size() == 1);
    records.push_back(std::move(record));
  }
  return records;
}

void check_tsv_safe(std::string_view s, std::string_view what) {
  if (s.find_first_of("\t\n\r") != std::string_view::npos) {
    throw ParseError(std::string(what) + " '" + std::string(s) +
                     "' contains a tab or line break; TSV quoting is unsupported");
  }
}

}  // namespace

std::vector<MetadataRecord> parse_record_table(std::string_view raw,
                                               RecordFormat format,
                                               const RecordParseOptions& options) {
  raw = strip_bom(raw);
  return format == RecordFormat::kTsv ? parse_tsv(raw, options)
                                      : parse_objects(raw, options);
}

std::string coerce_to_text(const ordered_json& value) {
  switch (value.type()) {
    case ordered_json::value_t::string:
      return value.get<std::string>();
    case ordered_json::value_t::null:
      return "";
    case ordered_json::value_t::boolean:
      return value.get<bool>() ? "true" : "false";
    case ordered_json::value_t::number_integer:
    case ordered_json::value_t::number_unsigned:
    case ordered_json::value_t::number_float:
      return value.dump();
    default:
      throw ParseError("value of type " + std::string(value.type_name()) +
                       " cannot be coerced to text");
  }
}

ordered_json record_to_json(const MetadataRecord& record) {
  ordered_json doc = ordered_json::object();
  for (const auto& f : record.fields()) doc[f.name] = f.value;
  return doc;
}

std::string serialize_record(const MetadataRecord& record, RecordFormat format) {
  if (format == RecordFormat::kObject) {
    try {
      return record_to_json(record).dump(2, ' ', false) + "\n";
    } catch (const ordered_json::exception& e) {
      throw ParseError(std::string("record is not valid UTF-8: ") + e.what());
    }
  }
  return serialize_records_tsv({record});
}

std::string serialize_records_tsv(const std::vector<MetadataRecord>& records) {
  if (records.empty() || records.front().empty()) {
    for (const auto& r : records) {
      if (!r.empty()) throw ParseError("records do not share one header");
    }
    return "";
  }
  const auto& head = records.front().fields();
  std::string out;
  for (std::size_t i = 0; i < head.size(); ++i) {
    check_tsv_safe(head[i].name, "field name");
    if (i) out.push_back('\t');
    out += head[i].name;
  }
  out.push_back('\n');
  for (const auto& r : records) {
    if (r.size() != head.size()) throw ParseError("records do not share one header");
    for (std::size_t i = 0; i < head.size(); ++i) {
      const auto& f = r.fields()[i];
      if (f.name != head[i].name) throw ParseError("records do not share one header");
      check_tsv_safe(f.value, "value of field '" + f.name + "'");
      if (i) out.push_back('\t');
      out += f.value;
    }
    out.push_back('\n');
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

std::vector<MetadataRecord> load_records(const std::filesystem::path& path,
                                         const RecordParseOptions& options) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto& p = entry.path();
      if (entry.is_regular_file() && p.extension() == ".json" &&
          p.filename().string().find(".review.") == std::string::npos) {
        files.push_back(p);
      }
    }
    std::sort(files.begin(), files.end());
    std::vector<MetadataRecord> out;
    for (const auto& f : files) {
      RecordParseOptions per_file = options;
      per_file.fallback_id = f.stem().string();
      for (auto& r : parse_record_table(read_file(f), RecordFormat::kObject, per_file)) {
        out.push_back(std::move(r));
      }
    }
    return out;
  }
  RecordParseOptions per_file = options;
  if (per_file.fallback_id == "record") per_file.fallback_id = path.stem().string();
  auto ext = path.extension().string();
  RecordFormat format = (ext == ".json" || ext == ".jsonl" || ext == ".ndjson")
                            ? RecordFormat::kObject
                            : RecordFormat::kTsv;
  return parse_record_table(read_file(path), format, per_file);
}

}  // namespace metastd
