#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace scrolltest {

// Every design constant of a study in one place. Loaded from a YAML file whose
// keys match the member names.
struct StudyConfig {
  std::vector<std::string> techniques;
  std::vector<int> distances{8, 9, 10, 11, 20, 30, 40, 50, 60, 70, 80, 90, 99};
  std::vector<double> frameFactors{1.0, 1.5, 2.0, 2.5, 3.0};
  std::int64_t quiescenceMs = 66;
  double epsilonPx = 2.0;
  int participants = 11;
  int perParticipantTechniques = 3;
  int repetitions = 1;
  bool requireClick = false;
  std::uint64_t seed = 1;
  double lineHeightPx = 60.0;
  int visibleRows = 10;
  int trailingRows = 5;
  std::int64_t eventCadenceMs = 16;

  StudyConfig();

  // Rows in the document: the farthest target plus trailing rows so that it
  // can reach a centered frame.
  int row_count() const;

  // Throws std::invalid_argument naming the offending key.
  void validate() const;

  friend bool operator==(const StudyConfig&, const StudyConfig&) = default;
};

StudyConfig load_study_config(const std::filesystem::path& path);
StudyConfig parse_study_config(const std::string& yamlText);

void to_json(nlohmann::ordered_json& j, const StudyConfig& c);
void from_json(const nlohmann::ordered_json& j, StudyConfig& c);

}  // namespace scrolltest
