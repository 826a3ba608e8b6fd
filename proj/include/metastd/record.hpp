#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metastd/errors.hpp"

namespace metastd {

struct RecordField {
  std::string name;
  std::string value;

  bool operator==(const RecordField&) const = default;
};

// A flat legacy, predicted, or gold metadata record. Field order is the
// insertion order; a field present with an empty value is distinct from an
// absent field.
class MetadataRecord {
 public:
  MetadataRecord() = default;
  explicit MetadataRecord(std::string record_id) : id_(std::move(record_id)) {}

  const std::string& id() const noexcept { return id_; }
  void set_id(std::string record_id) { id_ = std::move(record_id); }

  // Throws ParseError when `name` is already present.
  void add(std::string name, std::string value);
  // Inserts at the end or replaces in place.
  void set(std::string_view name, std::string value);
  bool erase(std::string_view name);

  bool contains(std::string_view name) const { return index_of(name).has_value(); }
  const std::string* find(std::string_view name) const;

  const std::vector<RecordField>& fields() const noexcept { return fields_; }
  std::size_t size() const noexcept { return fields_.size(); }
  bool empty() const noexcept { return fields_.empty(); }

  // Compares fields only; ids are labels, not content.
  bool same_fields(const MetadataRecord& other) const {
    return fields_ == other.fields_;
  }
  bool operator==(const MetadataRecord&) const = default;

 private:
  std::optional<std::size_t> index_of(std::string_view name) const;

  std::string id_;
  std::vector<RecordField> fields_;
};

enum class RecordFormat { kTsv, kObject };

struct RecordParseOptions {
  // Field whose value becomes the record id; empty disables the lookup.
  std::string id_key;
  // Used when `id_key` is absent: "<fallback_id>-<n>" (1-based), or just
  // "<fallback_id>" for a single object document.
  std::string fallback_id = "record";
};

// TSV: header line of names, one record per following line.
// Object: a JSON object, a JSON array of objects, or one object per line.
std::vector<MetadataRecord> parse_record_table(
    std::string_view raw, RecordFormat format,
    const RecordParseOptions& options = {});

// TSV output is a header line plus one data line. A record without fields
// serializes to an empty TSV document or "{}".
std::string serialize_record(const MetadataRecord& record, RecordFormat format);

// Several records sharing one header. Throws ParseError when the field names
// or order differ between records.
std::string serialize_records_tsv(const std::vector<MetadataRecord>& records);

// Scalar JSON leaf to text: strings verbatim, numbers in JSON spelling,
// booleans as true/false, null as "". Objects and arrays throw ParseError.
std::string coerce_to_text(const nlohmann::ordered_json& value);

nlohmann::ordered_json record_to_json(const MetadataRecord& record);

// A .tsv file, a .json/.jsonl file, or a directory of .json files (one record
// per file, id defaulting to the file stem). Directory entries load in name
// order.
std::vector<MetadataRecord> load_records(const std::filesystem::path& path,
                                         const RecordParseOptions& options = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace metastd
