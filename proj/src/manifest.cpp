#include "stepnet/manifest.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "stepnet/errors.hpp"

namespace stepnet {

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("manifest: cannot open " + path.string());
  Manifest m;
  std::set<int64_t> train_signers, test_signers;
  std::set<int64_t> labels;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("manifest: bad JSON at line " + std::to_string(line_no) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.path = j.at("path").get<std::string>();
      e.label = j.at("label").get<int64_t>();
      e.split = j.at("split").get<std::string>();
      e.signer_id = j.at("signer_id").get<int64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("manifest: missing field at line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.split != "train" && e.split != "test") {
      throw ConfigError("manifest: unknown split '" + e.split + "' at line " + std::to_string(line_no));
    }
    if (e.label < 0) throw ConfigError("manifest: negative label at line " + std::to_string(line_no));
    (e.split == "train" ? train_signers : test_signers).insert(e.signer_id);
    labels.insert(e.label);
    m.entries.push_back(std::move(e));
  }
  if (m.entries.empty()) throw ConfigError("manifest: no entries in " + path.string());

  // signer-independent split is a hard requirement
  for (int64_t s : train_signers) {
    if (test_signers.count(s)) {
      throw ConfigError("manifest: signer " + std::to_string(s) + " appears in both splits");
    }
  }

  m.num_classes = *labels.rbegin() + 1;
  for (int64_t c = 0; c < m.num_classes; ++c) {
    if (!labels.count(c)) {
      throw ConfigError("manifest: labels not dense, class " + std::to_string(c) + " missing");
    }
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ofstream os(path);
  if (!os) throw IoError("manifest: cannot write " + path.string());
  for (const auto& e : manifest.entries) {
    nlohmann::json j;
    j["path"] = e.path;
    j["label"] = e.label;
    j["split"] = e.split;
    j["signer_id"] = e.signer_id;
    os << j.dump() << '\n';
  }
}

}  // namespace stepnet
