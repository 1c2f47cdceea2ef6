// o3dsg <command> --config <path> [--set key=value ...]

#include <CLI11.hpp>
#include <iostream>

#include "o3dsg/errors.hpp"
#include "o3dsg/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Open-vocabulary 3D scene graphs at desk scale"};
  app.require_subcommand(1, 1);
  std::string config;
  std::vector<std::string> overrides;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"gen-fixture", "write the synthetic fixture and its pipeline config"},
      {"select-frames", "pick the top-k frames per object and per pair"},
      {"extract", "aggregate 2D targets over the selected frames"},
      {"train", "distill the 2D targets into the 3D graph network"},
      {"infer", "predict open-vocabulary scene graphs"},
      {"eval", "score predicted graphs against ground truth"},
      {"repl", "interactive queries over one predicted graph"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "pipeline configuration (JSON)")->required();
    sub->add_option("--set", overrides, "override a config key, e.g. --set train.epochs=50");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    const auto cfg = o3dsg::load_config(config, overrides);
    if (cmd == "gen-fixture") o3dsg::cmd_gen_fixture(cfg, std::cerr);
    else if (cmd == "select-frames") o3dsg::cmd_select_frames(cfg, std::cerr);
    else if (cmd == "extract") o3dsg::cmd_extract(cfg, std::cerr);
    else if (cmd == "train") o3dsg::cmd_train(cfg, std::cerr);
    else if (cmd == "infer") o3dsg::cmd_infer(cfg, std::cerr);
    else if (cmd == "eval") o3dsg::cmd_eval(cfg, std::cerr);
    else if (cmd == "repl") o3dsg::cmd_repl(cfg, std::cin, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "o3dsg " << cmd << ": " << e.what() << '\n';
    return o3dsg::exit_code_for(e);
  }
  return 0;
}
