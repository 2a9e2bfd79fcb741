// bienc: tokenizer training, bi-encoder training, indexing, retrieval,
// evaluation and the pooling/metric/type ablation grid.

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bienc/bienc.hpp"

namespace {

// Every flag maps to a settings key (dashes become underscores).
const std::map<std::string, const char*>& flag_help() {
  static const std::map<std::string, const char*> help = {
      {"corpus", "corpus directory (documents/, mentions/, optional splits.tsv)"},
      {"out", "output directory or file"},
      {"vocab", "tokenizer directory holding vocab.txt and merges.txt"},
      {"vocab_size", "target vocabulary size including specials and alphabet"},
      {"model", "model directory written by `train`"},
      {"index", "index directory written by `embed`"},
      {"candidates", "candidate file written by `retrieve`"},
      {"mentions", "mention set name, e.g. train, val, test"},
      {"split", "train: mention set to train on; embed: embed the worlds of this split"},
      {"world", "embed a single world"},
      {"pooling", "cls|avg|sum|avg_special|sum_special|conc_special"},
      {"metric", "dot|cosine|euclidean"},
      {"k", "number of candidates to retrieve"},
      {"k_list", "comma-separated K values to report"},
      {"entity_types", "type annotation TSV, or off"},
      {"max_len", "sequence length n"},
      {"dim", "hidden size D"},
      {"layers", "transformer layers"},
      {"heads", "attention heads"},
      {"ff_dim", "feed-forward width"},
      {"dropout", "dropout rate during training"},
      {"seed", "seed for initialization, shuffling and dropout"},
      {"batch_size", "training batch size"},
      {"epochs", "training epochs"},
      {"lr", "peak learning rate"},
      {"weight_decay", "decoupled weight decay"},
      {"share_weights", "on: one encoder for mentions and entities"},
      {"freeze_entity_encoder", "on: train only the mention encoder"},
      {"repeat_mention_surface", "off: omit the mention surface after the type token"},
      {"divide_by_max_len", "on: avg pooling divides by n instead of the attention length"},
      {"specials_over_all_rows", "on: special-token pooling divides by n"},
      {"threads", "worker threads for embedding and retrieval"},
      {"poolings", "experiment: comma-separated pooling kinds"},
      {"metrics", "experiment: comma-separated metrics"},
      {"types", "experiment: comma-separated on/off"},
      {"entities", "make-toy: number of entities"},
      {"num_mentions", "make-toy: number of mentions"},
  };
  return help;
}

const std::vector<std::string> kModelFlags = {"pooling", "max_len", "dim", "layers", "heads", "ff_dim",
                                              "dropout", "share_weights", "repeat_mention_surface",
                                              "divide_by_max_len", "specials_over_all_rows"};
const std::vector<std::string> kTrainFlags = {"batch_size", "epochs", "lr", "weight_decay", "freeze_entity_encoder"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct Command {
  CLI::App* app;
  std::map<std::string, std::string> values;
  std::string config;
};

void add_flags(Command& cmd, const std::vector<std::string>& keys) {
  cmd.app->add_option("--config", cmd.config, "key = value settings file; flags override it")->check(CLI::ExistingFile);
  for (const auto& key : keys)
    cmd.app->add_option("--" + bienc::Settings::dashed(key), cmd.values[key], flag_help().at(key));
}

bienc::Settings settings_of(const Command& cmd) {
  bienc::Settings s;
  if (!cmd.config.empty()) s = bienc::Settings::from_file(cmd.config);
  bienc::Settings flags;
  for (const auto& [key, value] : cmd.values)
    if (cmd.app->count("--" + bienc::Settings::dashed(key)) > 0) flags.set(key, value);
  s.merge(flags);
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bi-encoder entity linking: candidate generation toolkit"};
  app.require_subcommand(1);

  std::map<std::string, Command> cmds;
  auto sub = [&](const std::string& name, const std::string& desc, const std::vector<std::string>& keys) {
    auto& c = cmds[name];
    c.app = app.add_subcommand(name, desc);
    add_flags(c, keys);
  };
  sub("train-bpe", "learn a BPE vocabulary from entity titles and descriptions", {"corpus", "out", "vocab_size"});
  sub("train", "train the bi-encoder on a mention set",
      concat({{"corpus", "vocab", "out", "split", "entity_types", "seed"}, kModelFlags, kTrainFlags}));
  sub("embed", "encode entity dictionaries into per-world indexes",
      {"corpus", "vocab", "model", "out", "world", "split", "mentions", "metric", "entity_types", "threads"});
  sub("retrieve", "top-K candidates for every mention of a set",
      {"corpus", "vocab", "model", "index", "out", "mentions", "metric", "k", "entity_types", "threads"});
  sub("eval", "accuracy@K report from a candidate file",
      {"corpus", "candidates", "out", "mentions", "k_list", "metric", "pooling", "entity_types"});
  sub("experiment", "pooling x entity types x metric grid",
      concat({{"corpus", "vocab", "out", "split", "mentions", "entity_types", "seed", "k_list", "poolings", "metrics",
               "types", "threads"},
              kModelFlags, kTrainFlags}));
  sub("make-toy", "write the synthetic toy world", {"out", "entities", "num_mentions", "seed"});
  sub("stats", "entity, mention and type coverage per world", {"corpus", "entity_types"});

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto& [name, cmd] : cmds) {
      if (!cmd.app->parsed()) continue;
      const auto s = settings_of(cmd);
      if (name == "train-bpe") bienc::run_train_bpe(s);
      else if (name == "train") bienc::run_train(s, &std::cerr);
      else if (name == "embed") bienc::run_embed(s);
      else if (name == "retrieve") bienc::run_retrieve(s);
      else if (name == "eval") std::cout << bienc::run_eval(s).to_table();
      else if (name == "experiment") {
        bienc::run_experiment(s, &std::cerr);
        std::cout << bienc::detail::read_text(s.require("out") + "/comparison.txt");
      } else if (name == "make-toy") bienc::run_make_toy(s);
      else if (name == "stats") bienc::run_stats(s, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "bienc: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
