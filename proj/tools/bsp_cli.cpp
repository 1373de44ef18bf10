#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bsp/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  long long seed = -1;
};

bsp::RunConfig merged(const Common& c) {
  bsp::RunConfig cfg;
  if (!c.config.empty()) cfg.merge_file(c.config);
  for (const auto& s : c.sets) cfg.set(s);
  if (c.seed >= 0) cfg.merge(nlohmann::json{{"seed", c.seed}});
  return cfg;
}

std::string need_out(const Common& c) {
  if (c.out.empty()) throw bsp::ConfigError("--out DIR is required");
  return c.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary-sensitive pre-training on synthetic video"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  app.add_option("--config", c.config, "JSON config with flat dotted keys");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--set", c.sets, "override KEY=VALUE (repeatable)")->take_all();
  app.add_option("--seed", c.seed, "global seed");

  auto* gen = app.add_subcommand("gen-source", "generate the labeled clip dataset");
  auto* syn = app.add_subcommand("synth", "dump synthesized boundary samples");
  auto* pre = app.add_subcommand("pretrain", "pre-train an encoder");
  std::string task = "bsp-cls";
  pre->add_option("task", task, "vanilla | bsp-cls | bsp-reg | two-head");
  auto* dis = app.add_subcommand("distill", "distill vanilla and bsp teachers into one student");
  auto* ext = app.add_subcommand("extract", "write snippet feature tracks for one extractor");
  std::string extractor;
  ext->add_option("--extractor", extractor, "vanilla | bsp | student | two-stream | two-head | random")->required();
  auto* ev = app.add_subcommand("eval", "evaluate extractors on the untrimmed benchmark");
  std::string extractors;
  ev->add_option("--extractors", extractors, "comma list (default: eval.extractors)");
  auto* rep = app.add_subcommand("report", "summarize report.csv / eval.csv files");
  std::vector<std::string> files;
  rep->add_option("files", files, "CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const auto cfg = merged(c);
    std::string line;
    if (gen->parsed()) line = bsp::cmd::gen_source(cfg, need_out(c));
    if (syn->parsed()) line = bsp::cmd::synth(cfg, need_out(c));
    if (pre->parsed()) line = bsp::cmd::pretrain(cfg, bsp::cmd::task_from_string(task), need_out(c));
    if (dis->parsed()) line = bsp::cmd::distill(cfg, need_out(c));
    if (ext->parsed()) line = bsp::cmd::extract(cfg, extractor, need_out(c));
    if (ev->parsed()) line = bsp::cmd::evaluate(cfg, bsp::cmd::split_list(extractors), need_out(c));
    if (rep->parsed()) line = bsp::cmd::report(files, need_out(c));
    std::cout << line << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
