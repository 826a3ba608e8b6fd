#include "metastd/mock.hpp"

#include "metastd/errors.hpp"
#include "metastd/record.hpp"

namespace metastd {

std::string MockTemplateStore::fetch(const std::string& template_id) {
  ++requests_;
  auto it = documents_.find(template_id);
  if (it == documents_.end()) throw NotFoundError("template '" + template_id + "' not found");
  return it->second;
}

MockServices load_mock_services(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  MockServices services;
  services.templates = std::make_unique<MockTemplateStore>();
  fs::path ontology_file = fs::is_directory(path) ? path / "ontologies.json" : path;
  nlohmann::json fixture;
  try {
    fixture = nlohmann::json::parse(read_file(ontology_file));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock fixture " + ontology_file.string() + ": " + e.what());
  }
  services.terminology = std::make_unique<MockTerminology>(fixture);
  if (auto t = fixture.find("templates"); t != fixture.end()) {
    for (const auto& [id, doc] : t->items()) services.templates->add(id, doc.dump(2));
  }
  if (fs::is_directory(path / "templates")) {
    for (const auto& entry : fs::directory_iterator(path / "templates")) {
      if (entry.path().extension() == ".json") {
        services.templates->add(entry.path().stem().string(), read_file(entry.path()));
      }
    }
  }
  return services;
}

}  // namespace metastd
