#include "scrolltest/study_config.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

#include "scrolltest/experiment_design.h"

namespace scrolltest {

StudyConfig::StudyConfig() : techniques(TechniqueRegistry::defaults().ids()) {}

int StudyConfig::row_count() const {
  return *std::max_element(distances.begin(), distances.end()) + trailingRows;
}

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + key + " " + what);
}

template <typename T>
bool unique(const std::vector<T>& v) {
  return std::set<T>(v.begin(), v.end()).size() == v.size();
}

}  // namespace

void StudyConfig::validate() const {
  require(!techniques.empty() && unique(techniques), "techniques", "must be non-empty and unique");
  require(!distances.empty() && unique(distances), "distances", "must be non-empty and unique");
  require(std::all_of(distances.begin(), distances.end(), [](int d) { return d >= 2; }),
          "distances", "must all be >= 2");
  require(!frameFactors.empty() && unique(frameFactors), "frameFactors",
          "must be non-empty and unique");
  require(quiescenceMs > 0, "quiescenceMs", "must be positive");
  require(epsilonPx >= 0.0, "epsilonPx", "must be non-negative");
  require(participants >= 1, "participants", "must be >= 1");
  require(perParticipantTechniques >= 1 &&
              perParticipantTechniques <= static_cast<int>(techniques.size()),
          "perParticipantTechniques", "must be between 1 and the number of techniques");
  require(participants * perParticipantTechniques % static_cast<int>(techniques.size()) == 0,
          "participants", "times perParticipantTechniques must be divisible by the technique count");
  require(repetitions >= 1, "repetitions", "must be >= 1");
  require(lineHeightPx > 0.0, "lineHeightPx", "must be positive");
  require(visibleRows >= 2, "visibleRows", "must be >= 2");
  require(trailingRows >= 0, "trailingRows", "must be >= 0");
  require(eventCadenceMs > 0, "eventCadenceMs", "must be positive");
  for (double h : frameFactors) {
    require(h >= 1.0 && h <= visibleRows, "frameFactors",
            "must lie between 1 and visibleRows");
    for (int d : distances) {
      try {
        compute_target_band(make_geometry(lineHeightPx, h, d, row_count(), visibleRows));
      } catch (const GeometryError& e) {
        std::ostringstream msg;
        msg << "contain an unreachable cell (H=" << h << ", D=" << d << "): " << e.what();
        require(false, "distances", msg.str());
      }
    }
  }
}

namespace {

template <typename T>
void read(const YAML::Node& node, const char* key, T& out) {
  if (const YAML::Node v = node[key]) {
    try {
      out = v.as<T>();
    } catch (const YAML::Exception& e) {
      throw std::invalid_argument(std::string("config: bad value for ") + key + ": " + e.what());
    }
  }
}

}  // namespace

StudyConfig parse_study_config(const std::string& yamlText) {
  YAML::Node root;
  try {
    root = YAML::Load(yamlText);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  StudyConfig c;
  if (!root || root.IsNull()) {
    c.validate();
    return c;
  }
  if (!root.IsMap()) throw std::invalid_argument("config: top level must be a mapping");

  static const std::set<std::string> kKeys = {
      "techniques",   "distances",      "frameFactors", "quiescenceMs", "epsilonPx",
      "participants", "perParticipantTechniques",       "repetitions",  "requireClick",
      "seed",         "lineHeightPx",   "visibleRows",  "trailingRows", "eventCadenceMs"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!kKeys.contains(key)) throw std::invalid_argument("config: unknown key " + key);
  }
  read(root, "techniques", c.techniques);
  read(root, "distances", c.distances);
  read(root, "frameFactors", c.frameFactors);
  read(root, "quiescenceMs", c.quiescenceMs);
  read(root, "epsilonPx", c.epsilonPx);
  read(root, "participants", c.participants);
  read(root, "perParticipantTechniques", c.perParticipantTechniques);
  read(root, "repetitions", c.repetitions);
  read(root, "requireClick", c.requireClick);
  read(root, "seed", c.seed);
  read(root, "lineHeightPx", c.lineHeightPx);
  read(root, "visibleRows", c.visibleRows);
  read(root, "trailingRows", c.trailingRows);
  read(root, "eventCadenceMs", c.eventCadenceMs);
  c.validate();
  return c;
}

StudyConfig load_study_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_study_config(text.str());
}

void to_json(nlohmann::ordered_json& j, const StudyConfig& c) {
  j = nlohmann::ordered_json{{"techniques", c.techniques},
                             {"distances", c.distances},
                             {"frameFactors", c.frameFactors},
                             {"quiescenceMs", c.quiescenceMs},
                             {"epsilonPx", c.epsilonPx},
                             {"participants", c.participants},
                             {"perParticipantTechniques", c.perParticipantTechniques},
                             {"repetitions", c.repetitions},
                             {"requireClick", c.requireClick},
                             {"seed", c.seed},
                             {"lineHeightPx", c.lineHeightPx},
                             {"visibleRows", c.visibleRows},
                             {"trailingRows", c.trailingRows},
                             {"eventCadenceMs", c.eventCadenceMs}};
}

void from_json(const nlohmann::ordered_json& j, StudyConfig& c) {
  j.at("techniques").get_to(c.techniques);
  j.at("distances").get_to(c.distances);
  j.at("frameFactors").get_to(c.frameFactors);
  j.at("quiescenceMs").get_to(c.quiescenceMs);
  j.at("epsilonPx").get_to(c.epsilonPx);
  j.at("participants").get_to(c.participants);
  j.at("perParticipantTechniques").get_to(c.perParticipantTechniques);
  j.at("repetitions").get_to(c.repetitions);
  j.at("requireClick").get_to(c.requireClick);
  j.at("seed").get_to(c.seed);
  j.at("lineHeightPx").get_to(c.lineHeightPx);
  j.at("visibleRows").get_to(c.visibleRows);
  j.at("trailingRows").get_to(c.trailingRows);
  j.at("eventCadenceMs").get_to(c.eventCadenceMs);
}

}  // namespace scrolltest
