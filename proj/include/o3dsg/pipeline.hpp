#pragma once

// Pipeline configuration and the command implementations behind the CLI.
// Every command reads upstream artifacts from the work directory and writes
// its own outputs there; source files are never modified.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "o3dsg/evaluation.hpp"
#include "o3dsg/fixture.hpp"
#include "o3dsg/frame_selection.hpp"
#include "o3dsg/graph_net.hpp"
#include "o3dsg/inference.hpp"
#include "o3dsg/training.hpp"

namespace o3dsg {

struct DecoderConfig {
  std::string type = "nearest";  // "nearest" or "http"
  std::string endpoint;
  double timeout_s = 30.0;
  int max_in_flight = 4;
  bool fallback = false;  // retry failed http decodes with nearest-neighbor
};

struct PipelineConfig {
  nlohmann::json raw;  // merged JSON, echoed into outputs
  std::filesystem::path base_dir;

  std::filesystem::path work_dir;
  std::vector<std::filesystem::path> train_scenes;
  std::vector<std::filesystem::path> eval_scenes;

  std::filesystem::path object_table, predicate_table, lookup_table;
  std::vector<std::filesystem::path> text_tables;         // phrase -> lookup space
  std::vector<std::filesystem::path> object_text_tables;  // extra free-text queries in object space
  std::map<std::string, std::filesystem::path> attribute_tables;
  std::optional<std::filesystem::path> object_frequencies, predicate_frequencies;

  SelectionParams selection;
  std::vector<float> scales;
  std::optional<double> max_edge_distance;

  GraphNetConfig model;
  TrainConfig train;
  std::filesystem::path checkpoint;
  int log_every = 20;

  std::size_t top_k = 0;
  bool use_gt_labels = false;
  DecoderConfig decoder;

  EvalConfig eval;
  std::filesystem::path report;

  FixtureSpec fixture;
  std::filesystem::path fixture_out;

  std::string repl_scene;

  /// Relative paths resolve against `base_dir`. Throws ConfigError naming
  /// the dotted key of the first invalid value.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
};

/// Parses `key=value` (dotted key, value parsed as JSON, else taken as a
/// string) into `config`, creating intermediate objects.
void apply_override(nlohmann::json& config, std::string_view assignment);

/// Reads the config file (an absent file is an error) and applies overrides.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Work-directory location of a scene's artifacts.
std::filesystem::path scene_work_dir(const PipelineConfig& cfg, const Scene& scene);

// Commands. `log` receives human-readable progress.
FixtureSummary cmd_gen_fixture(const PipelineConfig& cfg, std::ostream& log);
void cmd_select_frames(const PipelineConfig& cfg, std::ostream& log);
void cmd_extract(const PipelineConfig& cfg, std::ostream& log);
std::vector<EpochRecord> cmd_train(const PipelineConfig& cfg, std::ostream& log);
void cmd_infer(const PipelineConfig& cfg, std::ostream& log);
nlohmann::json cmd_eval(const PipelineConfig& cfg, std::ostream& log);

/// Loads everything needed to answer queries about one scene.
class QuerySession {
 public:
  QuerySession(const PipelineConfig& cfg, const std::string& scene);

  const PredictedSceneGraph& graph() const noexcept { return graph_; }

  /// Executes one REPL line; writes tab-separated answers or "error\t..." to out.
  /// Returns false on quit/exit.
  bool execute(std::string_view line, std::ostream& out) const;

 private:
  PipelineConfig cfg_;
  PredictedSceneGraph graph_;
  EmbeddingTable objects_, lookup_;
  std::map<std::string, EmbeddingTable> attributes_;
  std::unique_ptr<TableTextEmbedder> object_text_, lookup_text_;
  std::shared_ptr<const RelationshipDecoder> decoder_;
};

/// Reads lines from `in` until EOF or quit.
void cmd_repl(const PipelineConfig& cfg, std::istream& in, std::ostream& out, std::ostream& log);

/// Splits a REPL line into words, honouring double quotes.
std::vector<std::string> split_command(std::string_view line);

/// Builds the configured decoder (nearest-neighbor over the predicate table,
/// or the http client, optionally with fallback).
std::shared_ptr<const RelationshipDecoder> make_decoder(const PipelineConfig& cfg);

/// CLI exit code for an exception: 1 usage/config, 2 data, 3 external service.
int exit_code_for(const std::exception& e);

}  // namespace o3dsg
