#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stepnet {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  int64_t label = 0;
  std::string split;  // "train" | "test"
  int64_t signer_id = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  int64_t num_classes = 0;
};

// Parses JSON-lines records {path, label, split, signer_id} and enforces the
// loader invariants: labels dense in [0, C), splits named train/test, and no
// signer present in both splits.
Manifest load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace stepnet
