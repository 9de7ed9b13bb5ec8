#include "nishlab/config.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

namespace nishlab {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(Toml, ParsesValueTypes) {
  const auto table = parse_toml(R"(# leading comment
[a]
s = "x \"q\" # not a comment"   # trailing
i = -42
big = 1_000
f = 2.5e-3
t = true
arr = [1, 2,
       3]   # spans lines
strs = ["a", "b"]
empty = []
)");
  ASSERT_EQ(table.size(), 1u);
  const auto& a = table[0];
  EXPECT_EQ(std::get<std::string>(a.find("s")->value), "x \"q\" # not a comment");
  EXPECT_EQ(std::get<std::int64_t>(a.find("i")->value), -42);
  EXPECT_EQ(std::get<std::int64_t>(a.find("big")->value), 1000);
  EXPECT_DOUBLE_EQ(std::get<double>(a.find("f")->value), 2.5e-3);
  EXPECT_TRUE(std::get<bool>(a.find("t")->value));
  EXPECT_EQ(std::get<ConfigArray>(a.find("arr")->value).size(), 3u);
  EXPECT_EQ(std::get<ConfigArray>(a.find("strs")->value).size(), 2u);
  EXPECT_TRUE(std::get<ConfigArray>(a.find("empty")->value).empty());
}

TEST(Toml, SyntaxErrorsNameTheLine) {
  EXPECT_NE(error_of("[model]\ndepth = \n").find("line 2"), std::string::npos);
  EXPECT_NE(error_of("[model]\nactivation = nish\n").find("double quotes"), std::string::npos);
  EXPECT_NE(error_of("depth = 3\n").find("before any [section]"), std::string::npos);
  EXPECT_NE(error_of("[model]\ndepth = 3\ndepth = 4\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("[model\n").find("unterminated"), std::string::npos);
  EXPECT_NE(error_of("[experiment]\ndepths = [1, \"a\"]\n").find("one type"), std::string::npos);
}

TEST(Config, EmptyTextGivesDefaults) {
  const auto cfg = parse_config("");
  EXPECT_EQ(cfg.model.architecture, Architecture::Mlp);
  EXPECT_EQ(cfg.model.depth, 3u);
  EXPECT_EQ(cfg.model.activation.tag, ActivationTag::Nish);
  EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::SGD);
  EXPECT_DOUBLE_EQ(cfg.optimizer.learning_rate, 0.1);
  EXPECT_EQ(cfg.experiment.batch_size, 128u);
  EXPECT_DOUBLE_EQ(cfg.dataset.train_fraction, 0.85);
}

TEST(Config, UnknownKeysAreErrorsNamingTheKey) {
  EXPECT_NE(error_of("[model]\nactvation = \"nish\"\n").find("model.actvation"),
            std::string::npos);
  EXPECT_NE(error_of("[training]\nepochs = 3\n").find("[training]"), std::string::npos);
}

TEST(Config, TypeAndRangeErrorsNameTheKey) {
  EXPECT_NE(error_of("[model]\ndepth = \"3\"\n").find("model.depth"), std::string::npos);
  EXPECT_NE(error_of("[model]\ndepth = -1\n").find("model.depth"), std::string::npos);
  EXPECT_NE(error_of("[model]\nactivation = \"tanh\"\n").find("model.activation"),
            std::string::npos);
  EXPECT_NE(error_of("[model]\nnish_derivative = \"wrong\"\n").find("model.nish_derivative"),
            std::string::npos);
  EXPECT_THROW(parse_config("[dataset]\ntrain_fraction = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("[optimizer]\nlearning_rate = 0\n"), ConfigError);
}

TEST(Config, AdamKindSelectsAdamDefaults) {
  const auto cfg = parse_config("[optimizer]\nlearning_rate = 0.002\nkind = \"adam\"\n");
  EXPECT_EQ(cfg.optimizer.kind, OptimizerKind::Adam);
  EXPECT_DOUBLE_EQ(cfg.optimizer.learning_rate, 0.002);
  EXPECT_DOUBLE_EQ(cfg.optimizer.beta2, 0.999);
}

TEST(Config, ActivationParameters) {
  const auto cfg = parse_config(R"([model]
activation = "swish"
swish_beta = 1.5
swish_trainable = true
nish_derivative = "printed"
)");
  EXPECT_EQ(cfg.model.activation.tag, ActivationTag::Swish);
  EXPECT_DOUBLE_EQ(cfg.model.activation.beta, 1.5);
  EXPECT_TRUE(cfg.model.activation.beta_trainable);
  EXPECT_EQ(cfg.model.activation.nish_derivative, NishDerivative::Printed);
}

TEST(Config, TomlSnapshotRoundTrips) {
  auto cfg = parse_config(R"([dataset]
dir = "/data/mnist"
noise_sigma = 0.30000000000000004
[model]
architecture = "cnn10"
activation = "rrelu"
[experiment]
seed = 9007199254740993
sigmas = [0, 0.5, 1]
activations = ["nish"]
)");
  const std::string snapshot = to_toml(cfg);
  const auto again = parse_config(snapshot);
  EXPECT_EQ(to_toml(again), snapshot);
  EXPECT_EQ(again.dataset.noise_sigma, 0.30000000000000004);
  EXPECT_EQ(again.experiment.seed, 9007199254740993u);
  EXPECT_EQ(again.model.architecture, Architecture::Cnn10);
  EXPECT_NE(snapshot.find("sigmas = [0.0, 0.5, 1.0]"), std::string::npos);
}

TEST(Config, JsonBridgeRoundTrips) {
  ExperimentConfig cfg;
  cfg.model.activation = ActivationKind::prelu(0.3);
  cfg.experiment.depths = {1, 2};
  const auto json = config_table_to_json(config_to_table(cfg));
  nlohmann::json doc{{"config", nlohmann::json::parse(json.dump())}, {"version", "x"}};
  const auto back = config_from_table(config_table_from_json(doc));
  EXPECT_EQ(to_toml(back), to_toml(cfg));
}

TEST(Config, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path() / "nishlab_config_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "c.toml") << "[model]\ndepth = 6\n";
  }
  EXPECT_EQ(load_config(dir / "c.toml").model.depth, 6u);
  EXPECT_THROW(load_config(dir / "missing.toml"), IoError);
  {
    std::ofstream(dir / "bad.json") << "{not json";
  }
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(ShippedConfigs, AllLoadAndRoundTrip) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(NISHLAB_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml") continue;
    ++n;
    SCOPED_TRACE(entry.path().string());
    const auto cfg = load_config(entry.path());
    EXPECT_EQ(to_toml(parse_config(to_toml(cfg))), to_toml(cfg));
  }
  EXPECT_GE(n, 4u);
}

}  // namespace
}  // namespace nishlab
