#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "metastd/template.hpp"
#include "metastd/terminology.hpp"

namespace metastd {

// Serves stored template documents byte-for-byte.
class MockTemplateStore : public TemplateSource {
 public:
  MockTemplateStore() = default;
  explicit MockTemplateStore(std::map<std::string, std::string> documents)
      : documents_(std::move(documents)) {}

  void add(std::string template_id, std::string document) {
    documents_[std::move(template_id)] = std::move(document);
  }
  std::string fetch(const std::string& template_id) override;
  std::size_t requests() const noexcept { return requests_.load(); }

 private:
  std::map<std::string, std::string> documents_;
  std::atomic<std::size_t> requests_{0};
};

struct MockServices {
  std::unique_ptr<MockTerminology> terminology;
  std::unique_ptr<MockTemplateStore> templates;
};

// `path` is either a fixture file (ontologies plus optional inline
// "templates": {id: document}) or a directory holding ontologies.json and
// templates/<id>.json, the latter served verbatim.
MockServices load_mock_services(const std::filesystem::path& path);

}  // namespace metastd
