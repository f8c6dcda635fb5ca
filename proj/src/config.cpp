#include "speechllm/config.h"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "speechllm/error.h"

namespace speechllm {

namespace {

// A mapping node whose keys must all be consumed.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(where() + " must be a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_.IsMap() && node_[key]; }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + qualified(key) + "'");
    }
  }

  YAML::Node raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? node_[key] : YAML::Node();
  }

  Section child(const std::string& key) { return Section(raw(key), qualified(key)); }

  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError("unknown configuration key '" + qualified(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class V>
std::map<int, V> stage_map(const YAML::Node& node, const std::string& path) {
  std::map<int, V> out;
  if (!node || node.IsNull()) return out;
  if (!node.IsMap()) throw ConfigError("'" + path + "' must map stage numbers to values");
  for (const auto& kv : node) {
    try {
      out[kv.first.as<int>()] = kv.second.as<V>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad entry in '" + path + "'");
    }
  }
  return out;
}

void read_encoder(Section s, EncoderConfig& c) {
  s.get("dim", c.dim);
  s.get("layers", c.layers);
  s.get("heads", c.heads);
  s.get("window", c.window);
  s.get("ffn_mult", c.ffn_mult);
  s.finish();
}

void read_projector(Section s, ProjectorConfig& c) {
  std::string kind(projector_kind_name(c.kind));
  s.get("kind", kind);
  c.kind = parse_projector_kind(kind);
  s.get("downsample", c.downsample);
  s.get("num_queries", c.num_queries);
  s.get("layers", c.layers);
  s.get("heads", c.heads);
  s.get("ffn_mult", c.ffn_mult);
  s.get("qformer_positions", c.qformer_positions);
  s.finish();
}

void read_llm(Section s, LlmConfig& c) {
  s.get("dim", c.dim);
  s.get("layers", c.layers);
  s.get("heads", c.heads);
  s.get("ffn_mult", c.ffn_mult);
  s.get("max_positions", c.max_positions);
  std::string positions(position_mode_name(c.positions));
  s.get("positions", positions);
  c.positions = parse_position_mode(positions);
  s.finish();
}

void read_lora(Section s, LoraConfig& c) {
  s.get("rank", c.rank);
  s.get("alpha", c.alpha);
  s.get("targets", c.targets);
  s.finish();
}

void read_dialects(const YAML::Node& node, std::vector<DialectParams>& out) {
  if (!node || node.IsNull()) return;
  if (!node.IsSequence()) throw ConfigError("'corpus.dialects' must be a list");
  out.clear();
  for (std::size_t i = 0; i < node.size(); ++i) {
    Section s(node[i], "corpus.dialects[" + std::to_string(i) + "]");
    DialectParams d;
    s.get("tag", d.tag);
    s.get("noise", d.noise);
    YAML::Node seed = s.raw("rotation_seed");
    if (seed && !seed.IsNull()) {
      try {
        d.rotation_seed = seed.as<std::uint64_t>();
      } catch (const YAML::Exception&) {
        throw ConfigError("bad value for '" + s.qualified("rotation_seed") + "'");
      }
    }
    std::string subs;
    s.get("substitutions", subs);
    d.substitutions = parse_substitutions(subs);
    s.finish();
    out.push_back(std::move(d));
  }
}

}  // namespace

void RunConfig::validate() const {
  corpus.validate();
  model.projector.validate();
  if (data.dev_fraction < 0 || data.test_fraction < 0 || data.dev_fraction + data.test_fraction >= 1) {
    throw ConfigError("data fractions must be non-negative and sum below 1");
  }
  const bool any_manifest = !data.train_manifest.empty() || !data.dev_manifest.empty() || !data.test_manifest.empty();
  const bool all_manifests = !data.train_manifest.empty() && !data.dev_manifest.empty() && !data.test_manifest.empty();
  if (any_manifest && !all_manifests) throw ConfigError("give all of data.train/dev/test_manifest or none");
  if (data.eval_limit < 0) throw ConfigError("data.eval_limit must be >= 0");
  if (pretrain.llm_steps < 0 || pretrain.ctc_steps < 0) throw ConfigError("pretrain step counts must be >= 0");
  const EncoderConfig& e = model.encoder;
  if (e.dim < 1 || e.layers < 0 || e.heads < 1 || e.dim % e.heads != 0 || e.window < 0 || e.ffn_mult < 1) {
    throw ConfigError("invalid encoder geometry");
  }
  const LlmConfig& l = model.llm;
  if (l.dim < 1 || l.layers < 0 || l.heads < 1 || l.dim % l.heads != 0 || l.ffn_mult < 1 || l.max_positions < 1) {
    throw ConfigError("invalid llm geometry");
  }
  if (model.projector.kind != ProjectorKind::linear && model.projector.kind != ProjectorKind::conv1d &&
      e.dim % model.projector.heads != 0) {
    throw ConfigError("projector heads must divide the encoder width");
  }
  if (model.max_decode_len < 1) throw ConfigError("model.max_decode_len must be >= 1");
  // Every corpus symbol must be in the vocabulary.
  const Vocabulary vocab = model.symbols.empty() ? Vocabulary::standard() : Vocabulary(model.symbols);
  try {
    vocab.tokenize(corpus.alphabet, TokenRole::transcript);
    vocab.tokenize(model.prompt, TokenRole::prompt);
  } catch (const TokenizeError& err) {
    throw ConfigError(std::string("vocabulary does not cover the corpus or prompt: ") + err.what());
  }
  build_stage_plan(training, model.llm_mode, seed);
}

RunConfig default_run_config() {
  RunConfig c;
  c.corpus.dialects = default_dialects();
  c.pretrain.llm_steps = 250;
  c.pretrain.llm_lr = 1e-3;
  c.training.optimizer.lr = 1e-3;
  c.training.steps = {{1, 150}, {2, 100}, {3, 60}, {4, 100}};
  return c;
}

RunConfig parse_run_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("configuration is not valid YAML: ") + e.what());
  }
  RunConfig c = default_run_config();
  Section top(root, "");
  top.get("seed", c.seed);
  top.get("out", c.out);

  Section corpus = top.child("corpus");
  corpus.get("seed", c.corpus.seed);
  corpus.get("n_utts", c.corpus.n_utts);
  corpus.get("alphabet", c.corpus.alphabet);
  corpus.get("feature_dim", c.corpus.feature_dim);
  corpus.get("frames_per_symbol", c.corpus.frames_per_symbol);
  corpus.get("min_symbols", c.corpus.min_symbols);
  corpus.get("max_symbols", c.corpus.max_symbols);
  read_dialects(corpus.raw("dialects"), c.corpus.dialects);
  corpus.finish();

  Section data = top.child("data");
  data.get("dev_fraction", c.data.dev_fraction);
  data.get("test_fraction", c.data.test_fraction);
  data.get("train_manifest", c.data.train_manifest);
  data.get("dev_manifest", c.data.dev_manifest);
  data.get("test_manifest", c.data.test_manifest);
  data.get("eval_limit", c.data.eval_limit);
  data.finish();

  Section model = top.child("model");
  read_encoder(model.child("encoder"), c.model.encoder);
  read_projector(model.child("projector"), c.model.projector);
  read_llm(model.child("llm"), c.model.llm);
  read_lora(model.child("lora"), c.model.lora);
  std::string mode(llm_mode_name(c.model.llm_mode));
  model.get("llm_mode", mode);
  c.model.llm_mode = parse_llm_mode(mode);
  model.get("prompt", c.model.prompt);
  model.get("symbols", c.model.symbols);
  model.get("max_decode_len", c.model.max_decode_len);
  model.finish();

  Section pre = top.child("pretrain");
  pre.get("llm_steps", c.pretrain.llm_steps);
  pre.get("llm_lr", c.pretrain.llm_lr);
  pre.get("ctc_steps", c.pretrain.ctc_steps);
  pre.get("ctc_lr", c.pretrain.ctc_lr);
  pre.finish();

  Section training = top.child("training");
  training.get("stages", c.training.stages);
  if (training.has("steps")) c.training.steps = stage_map<long>(training.raw("steps"), "training.steps");
  c.training.lr = stage_map<double>(training.raw("lr"), "training.lr");
  c.training.groups = stage_map<std::vector<std::string>>(training.raw("groups"), "training.groups");
  training.get("stage4_lora", c.training.stage4_lora);
  training.get("accumulation", c.training.accumulation);
  double clip = c.training.clip;
  training.get("clip", clip);
  c.training.clip = static_cast<real>(clip);
  Section opt = training.child("optimizer");
  opt.get("lr", c.training.optimizer.lr);
  opt.get("beta1", c.training.optimizer.beta1);
  opt.get("beta2", c.training.optimizer.beta2);
  opt.get("eps", c.training.optimizer.eps);
  opt.get("weight_decay", c.training.optimizer.weight_decay);
  opt.finish();
  training.finish();

  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str());
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter y;
  y.SetDoublePrecision(17);
  y << YAML::BeginMap;
  y << YAML::Key << "seed" << YAML::Value << c.seed;
  y << YAML::Key << "out" << YAML::Value << c.out;

  y << YAML::Key << "corpus" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "seed" << YAML::Value << c.corpus.seed;
  y << YAML::Key << "n_utts" << YAML::Value << c.corpus.n_utts;
  y << YAML::Key << "alphabet" << YAML::Value << c.corpus.alphabet;
  y << YAML::Key << "feature_dim" << YAML::Value << c.corpus.feature_dim;
  y << YAML::Key << "frames_per_symbol" << YAML::Value << c.corpus.frames_per_symbol;
  y << YAML::Key << "min_symbols" << YAML::Value << c.corpus.min_symbols;
  y << YAML::Key << "max_symbols" << YAML::Value << c.corpus.max_symbols;
  y << YAML::Key << "dialects" << YAML::Value << YAML::BeginSeq;
  for (const DialectParams& d : c.corpus.dialects) {
    y << YAML::BeginMap;
    y << YAML::Key << "tag" << YAML::Value << d.tag;
    y << YAML::Key << "rotation_seed" << YAML::Value;
    if (d.rotation_seed) {
      y << *d.rotation_seed;
    } else {
      y << YAML::Null;
    }
    y << YAML::Key << "noise" << YAML::Value << d.noise;
    y << YAML::Key << "substitutions" << YAML::Value << YAML::DoubleQuoted << format_substitutions(d.substitutions);
    y << YAML::EndMap;
  }
  y << YAML::EndSeq << YAML::EndMap;

  y << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "dev_fraction" << YAML::Value << c.data.dev_fraction;
  y << YAML::Key << "test_fraction" << YAML::Value << c.data.test_fraction;
  y << YAML::Key << "train_manifest" << YAML::Value << YAML::DoubleQuoted << c.data.train_manifest;
  y << YAML::Key << "dev_manifest" << YAML::Value << YAML::DoubleQuoted << c.data.dev_manifest;
  y << YAML::Key << "test_manifest" << YAML::Value << YAML::DoubleQuoted << c.data.test_manifest;
  y << YAML::Key << "eval_limit" << YAML::Value << c.data.eval_limit;
  y << YAML::EndMap;

  const ModelConfig& m = c.model;
  y << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "dim" << YAML::Value << m.encoder.dim;
  y << YAML::Key << "layers" << YAML::Value << m.encoder.layers;
  y << YAML::Key << "heads" << YAML::Value << m.encoder.heads;
  y << YAML::Key << "window" << YAML::Value << m.encoder.window;
  y << YAML::Key << "ffn_mult" << YAML::Value << m.encoder.ffn_mult;
  y << YAML::EndMap;
  y << YAML::Key << "projector" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "kind" << YAML::Value << std::string(projector_kind_name(m.projector.kind));
  y << YAML::Key << "downsample" << YAML::Value << m.projector.downsample;
  y << YAML::Key << "num_queries" << YAML::Value << m.projector.num_queries;
  y << YAML::Key << "layers" << YAML::Value << m.projector.layers;
  y << YAML::Key << "heads" << YAML::Value << m.projector.heads;
  y << YAML::Key << "ffn_mult" << YAML::Value << m.projector.ffn_mult;
  y << YAML::Key << "qformer_positions" << YAML::Value << m.projector.qformer_positions;
  y << YAML::EndMap;
  y << YAML::Key << "llm" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "dim" << YAML::Value << m.llm.dim;
  y << YAML::Key << "layers" << YAML::Value << m.llm.layers;
  y << YAML::Key << "heads" << YAML::Value << m.llm.heads;
  y << YAML::Key << "ffn_mult" << YAML::Value << m.llm.ffn_mult;
  y << YAML::Key << "max_positions" << YAML::Value << m.llm.max_positions;
  y << YAML::Key << "positions" << YAML::Value << std::string(position_mode_name(m.llm.positions));
  y << YAML::EndMap;
  y << YAML::Key << "lora" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "rank" << YAML::Value << m.lora.rank;
  y << YAML::Key << "alpha" << YAML::Value << m.lora.alpha;
  y << YAML::Key << "targets" << YAML::Value << YAML::Flow << m.lora.targets;
  y << YAML::EndMap;
  y << YAML::Key << "llm_mode" << YAML::Value << std::string(llm_mode_name(m.llm_mode));
  y << YAML::Key << "prompt" << YAML::Value << YAML::DoubleQuoted << m.prompt;
  y << YAML::Key << "symbols" << YAML::Value << YAML::DoubleQuoted << m.symbols;
  y << YAML::Key << "max_decode_len" << YAML::Value << m.max_decode_len;
  y << YAML::EndMap;

  y << YAML::Key << "pretrain" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "llm_steps" << YAML::Value << c.pretrain.llm_steps;
  y << YAML::Key << "llm_lr" << YAML::Value << c.pretrain.llm_lr;
  y << YAML::Key << "ctc_steps" << YAML::Value << c.pretrain.ctc_steps;
  y << YAML::Key << "ctc_lr" << YAML::Value << c.pretrain.ctc_lr;
  y << YAML::EndMap;

  const PlanConfig& t = c.training;
  y << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "stages" << YAML::Value << YAML::Flow << t.stages;
  y << YAML::Key << "steps" << YAML::Value << YAML::Flow << YAML::BeginMap;
  for (const auto& [k, v] : t.steps) y << YAML::Key << k << YAML::Value << v;
  y << YAML::EndMap;
  y << YAML::Key << "lr" << YAML::Value << YAML::Flow << YAML::BeginMap;
  for (const auto& [k, v] : t.lr) y << YAML::Key << k << YAML::Value << v;
  y << YAML::EndMap;
  y << YAML::Key << "groups" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, v] : t.groups) y << YAML::Key << k << YAML::Value << YAML::Flow << v;
  y << YAML::EndMap;
  y << YAML::Key << "stage4_lora" << YAML::Value << t.stage4_lora;
  y << YAML::Key << "accumulation" << YAML::Value << t.accumulation;
  y << YAML::Key << "clip" << YAML::Value << static_cast<double>(t.clip);
  y << YAML::Key << "optimizer" << YAML::Value << YAML::BeginMap;
  y << YAML::Key << "lr" << YAML::Value << t.optimizer.lr;
  y << YAML::Key << "beta1" << YAML::Value << t.optimizer.beta1;
  y << YAML::Key << "beta2" << YAML::Value << t.optimizer.beta2;
  y << YAML::Key << "eps" << YAML::Value << t.optimizer.eps;
  y << YAML::Key << "weight_decay" << YAML::Value << t.optimizer.weight_decay;
  y << YAML::EndMap;
  y << YAML::EndMap;

  y << YAML::EndMap;
  return std::string(y.c_str()) + "\n";
}

ModelConfig resolved_model_config(const RunConfig& config) {
  ModelConfig m = config.model;
  m.encoder.input_dim = config.corpus.feature_dim;
  return m;
}

StagePlan plan_for(const RunConfig& config) {
  return build_stage_plan(config.training, config.model.llm_mode, config.seed);
}

}  // namespace speechllm
