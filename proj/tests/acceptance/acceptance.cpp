#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fixtures.h"
#include "gradient_cases.h"
#include "oracles.h"
#include "speechllm/cer.h"
#include "speechllm/checkpoint.h"
#include "speechllm/ctc.h"
#include "speechllm/encoder.h"
#include "speechllm/error.h"
#include "speechllm/llm.h"
#include "speechllm/optim.h"
#include "speechllm/projector.h"
#include "speechllm/stages.h"

using namespace speechllm;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), a.numel() * sizeof(real)) == 0;
}

fs::path g_work;

int run_cli(const std::string& args, const fs::path& log) {
  std::string command = std::string(SPEECHLLM_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing " + path.string());
  return nlohmann::json::parse(in);
}

// 1. Finite-difference gradient suite.
Outcome gradient_suite() {
  auto start = Clock::now();
  auto results = testing::run_gradient_suite(2024, 4);
  double elapsed = seconds_since(start);
  double worst = 0;
  std::string worst_op;
  std::set<std::string> ops;
  for (const auto& r : results) {
    ops.insert(r.op);
    if (!(r.relative_error <= worst)) {
      worst = r.relative_error;
      worst_op = r.op;
    }
  }
  Outcome o;
  o.pass = results.size() >= 100 && worst < 1e-4 && elapsed < 120;
  o.detail = std::to_string(results.size()) + " instances over " + std::to_string(ops.size()) +
             " ops, max rel err " + fmt("%.2e", worst) + " (" + worst_op + "), " + fmt("%.2f", elapsed) +
             " s (limits: >=100, <1e-4, <120 s)";
  return o;
}

// 2. CTC against exhaustive path enumeration.
Outcome ctc_oracle() {
  auto start = Clock::now();
  std::mt19937_64 rng(77);
  double worst = 0;
  int cases = 0, infeasible = 0;
  bool ok = true;
  for (int frames = 1; frames <= 4; ++frames)
    for (int vocab = 1; vocab <= 3; ++vocab) {
      std::vector<std::vector<int>> targets = {{}};
      for (int a = 0; a < vocab; ++a) {
        targets.push_back({a});
        for (int b = 0; b < vocab; ++b) targets.push_back({a, b});
      }
      for (const auto& target : targets)
        for (int trial = 0; trial < 3; ++trial) {
          Tensor logits = trial == 0 ? Tensor::zeros({frames, vocab + 1})
                                     : testing::random_tensor({frames, vocab + 1}, rng, 2.0);
          if (frames < ctc_min_frames(target)) {
            ++infeasible;
            try {
              ctc_loss(logits, target);
              ok = false;
            } catch (const InfeasibleAlignmentError&) {
            }
            continue;
          }
          double err = std::abs(ctc_loss(logits, target).item() - testing::ctc_brute_force(logits, target));
          worst = std::max(worst, err);
          ++cases;
        }
    }
  double uniform = ctc_loss(Tensor::zeros({2, 3}), std::vector<int>{0}).item();
  double uniform_err = std::abs(uniform - std::log(3.0));
  double elapsed = seconds_since(start);
  Outcome o;
  o.pass = ok && worst < 1e-6 && uniform_err < 1e-6 && elapsed < 10;
  o.detail = std::to_string(cases) + " feasible cases, max |diff| " + fmt("%.2e", worst) + ", " +
             std::to_string(infeasible) + " infeasible rejected, uniform T'=2 loss " + fmt("%.12f", uniform) +
             " vs log 3, " + fmt("%.2f", elapsed) + " s";
  return o;
}

// 3. Frame-rate arithmetic.
Outcome frame_rates() {
  ParameterStore store;
  Rng rng(1);
  EncoderConfig ec;
  Encoder encoder(store, ec, rng);
  std::mt19937_64 data(2);
  Tensor x = testing::random_tensor({400, ec.input_dim}, data);
  FeatureSequence features{400, ec.input_dim, std::vector<real>(x.values().begin(), x.values().end())};
  EncoderOutput encoded = encoder.encode(features);
  const double duration = features.duration_seconds();
  std::ostringstream detail;
  bool ok = encoded.length() == 100 && encoded.frame_rate_hz == 25.0 && encoded.length() / duration == 25.0;
  detail << "400 frames -> " << encoded.length() << " @ " << encoded.frame_rate_hz << " Hz";
  for (auto [k, expected_len, expected_rate] : std::vector<std::tuple<int, int, double>>{{4, 25, 6.25}, {8, 12, 3.125}}) {
    ProjectorConfig pc;
    pc.downsample = k;
    auto projector = make_projector(store, ec.dim, pc, rng);
    LlmBridge bridge(store, ec.dim, 32, rng);
    SpeechEmbedding e = project(*projector, bridge, encoded);
    ok = ok && e.length() == expected_len && e.frame_rate_hz && *e.frame_rate_hz == expected_rate;
    detail << "; k=" << k << " -> " << e.length() << " @ " << *e.frame_rate_hz << " Hz";
    store = ParameterStore{};
  }
  ProjectorConfig qc;
  qc.kind = ProjectorKind::qformer;
  auto qformer = make_projector(store, ec.dim, qc, rng);
  std::vector<int> lengths;
  for (int t = 1; t <= 64; ++t) lengths.push_back(t);
  std::uniform_int_distribution<int> any(65, 9999);
  for (int i = 0; i < 16; ++i) lengths.push_back(any(data));
  lengths.push_back(10000);
  int bad = 0;
  for (int t : lengths) {
    Tensor frames = testing::random_tensor({t, ec.dim}, data);
    if (qformer->forward(frames).rows() != 64 || qformer->output_length(t) != 64) ++bad;
  }
  ok = ok && bad == 0 && !qformer->output_rate(25.0).has_value();
  detail << "; q-former 64 outputs for " << lengths.size() - bad << "/" << lengths.size()
         << " lengths in [1, 10000]";
  return {ok, detail.str()};
}

// 4. Freeze soundness over 50-step stages.
Outcome freeze_soundness() {
  const Dataset data = synth_corpus(testing::tiny_corpus_config(40));
  std::ostringstream detail;
  bool ok = true;
  struct Variant {
    std::vector<int> stages;
    LlmMode mode;
  };
  for (const Variant& v : {Variant{{1, 2, 3}, LlmMode::lora}, Variant{{1, 2, 3, 4}, LlmMode::lora},
                           Variant{{1, 2, 3, 4}, LlmMode::full}}) {
    ModelConfig mc = testing::tiny_model_config();
    mc.llm_mode = v.mode;
    SpeechLlm model(mc, 21);
    fs::path run = g_work / "freeze" / (std::to_string(v.stages.size()) + "_" + std::string(llm_mode_name(v.mode)));
    fs::remove_all(run);
    save_checkpoint(run / "initial", model.store(), {});
    PlanConfig pc;
    pc.stages = v.stages;
    for (int s : v.stages) pc.steps[s] = 50;
    pc.accumulation = 2;
    pc.optimizer.lr = 1e-3;
    StagePlan plan = build_stage_plan(pc, v.mode, 21);
    auto results = run_plan(model, data, {data[0]}, plan, run);
    Checkpoint previous = read_checkpoint(run / "initial");
    detail << (detail.tellp() > 0 ? "; " : "") << v.stages.size() << "-stage " << llm_mode_name(v.mode) << ":";
    for (const StageResult& r : results) {
      Checkpoint current = read_checkpoint(run / ("stage" + std::to_string(r.spec.index)));
      bool match = changed_groups(previous, current) == r.spec.trainable_groups && r.metrics.steps == 50;
      ok = ok && match;
      detail << " s" << r.spec.index << (match ? " ok" : " MISMATCH");
      previous = std::move(current);
    }
  }
  return {ok, detail.str()};
}

// 5. LoRA invariants.
Outcome lora_invariants() {
  LlmConfig lc;
  lc.vocab_size = 20;
  lc.dim = 32;
  lc.layers = 2;
  lc.heads = 4;
  lc.max_positions = 64;
  ParameterStore store;
  Rng rng(31);
  LanguageModel lm(store, lc, rng);
  std::mt19937_64 data(32);
  std::vector<Tensor> inputs;
  std::vector<std::vector<Segment>> segments;
  std::uniform_int_distribution<int> len(1, 6);
  for (int i = 0; i < 100; ++i) {
    int p = len(data), s = len(data), t = len(data) - 1;
    std::vector<Segment> seg(p, Segment::prompt);
    seg.insert(seg.end(), s, Segment::speech);
    seg.insert(seg.end(), t, Segment::transcript);
    inputs.push_back(testing::random_tensor({p + s + t, lc.dim}, data));
    segments.push_back(std::move(seg));
  }
  std::vector<Tensor> base;
  for (int i = 0; i < 100; ++i) base.push_back(lm.logits(inputs[i], segments[i]));
  lm.apply_lora(store, LoraConfig{}, rng);
  int unchanged = 0;
  for (int i = 0; i < 100; ++i) unchanged += bitwise_equal(base[i], lm.logits(inputs[i], segments[i]));
  for (const Parameter* p : store.in_group(Group::lora)) {
    Tensor t = p->tensor;
    for (real& v : t.values()) v = std::normal_distribution<double>(0, 0.5)(data);
  }
  std::vector<Tensor> adapted;
  for (int i = 0; i < 100; ++i) adapted.push_back(lm.logits(inputs[i], segments[i]));
  lm.merge_lora(store);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    Tensor merged = lm.logits(inputs[i], segments[i]);
    for (std::size_t j = 0; j < merged.numel(); ++j)
      worst = std::max(worst, std::abs(double(merged.values()[j] - adapted[i].values()[j])));
  }
  // Scaling: one adapted linear map against a long-double evaluation of W + (32/12) A B.
  ParameterStore probe_store;
  Linear probe(probe_store, "probe", Group::llm_body, 6, 5, rng, false);
  probe.attach_lora(probe_store, 12, 32.0, rng);
  Tensor b = probe.lora()->b;
  for (real& v : b.values()) v = std::normal_distribution<double>(0, 1)(data);
  Tensor x = testing::random_tensor({4, 6}, data);
  Tensor y = probe.forward(x);
  double scale_err = 0;
  for (int r = 0; r < 4; ++r)
    for (int o = 0; o < 5; ++o) {
      long double expect = 0;
      for (int i = 0; i < 6; ++i) {
        long double ab = 0;
        for (int k = 0; k < 12; ++k) ab += (long double)probe.lora()->a.at(i, k) * b.at(k, o);
        expect += (long double)x.at(r, i) * (probe.weight().at(i, o) + 32.0L / 12.0L * ab);
      }
      scale_err = std::max(scale_err, double(std::abs(expect - (long double)y.at(r, o))));
    }
  bool exact_factor = probe.lora()->scaling() == real(32.0 / 12.0);
  Outcome o;
  o.pass = unchanged == 100 && worst < 1e-5 && exact_factor && scale_err < 1e-12;
  o.detail = "zero-init bitwise equal " + std::to_string(unchanged) + "/100, merged max |diff| " +
             fmt("%.2e", worst) + " (<1e-5), factor " + fmt("%.17g", probe.lora()->scaling()) +
             (exact_factor ? " == 32/12" : " != 32/12") + ", forward vs W+(32/12)AB " + fmt("%.1e", scale_err);
  return o;
}

// 6. Clipping, accumulation and the AdamW step.
Outcome optimizer_checks() {
  std::vector<real> g = {-7.0, 3.0, 6.0, -5.0, 5.0};
  clip_gradients(g);
  bool clip_ok = g == std::vector<real>{-5.0, 3.0, 5.0, -5.0, 5.0};
  std::mt19937_64 rng(41);
  std::normal_distribution<double> wide(0, 20);
  std::vector<real> r(10000);
  for (real& v : r) v = wide(rng);
  std::vector<real> clipped = r;
  clip_gradients(clipped);
  for (std::size_t i = 0; i < r.size(); ++i) clip_ok = clip_ok && clipped[i] == std::min(std::max(r[i], real(-5)), real(5));

  auto make_store = [] {
    ParameterStore s;
    for (Group grp : kAllGroups) s.set_trainable(grp, true);
    std::mt19937_64 init(42);
    s.add("w1", Group::projector, testing::random_tensor({4, 3}, init), true);
    s.add("w2", Group::encoder, testing::random_tensor({3, 2}, init), true);
    return s;
  };
  auto loss = [](const ParameterStore& s) {
    Tensor x({2, 4}, {1.0, -2.0, 0.5, 3.0, 0.1, 0.2, -0.3, 0.4});
    Tensor h = gelu(matmul(matmul(x, s.get("w1").tensor), s.get("w2").tensor));
    return scale(sum(mul(h, h)), 10.0);  // large enough that clipping engages
  };
  double worst_accum = 0;
  for (int n : {2, 3, 20}) {
    ParameterStore one = make_store(), many = make_store();
    AdamW opt_one(AdamWConfig{.lr = 1e-2}), opt_many(AdamWConfig{.lr = 1e-2});
    accumulate_and_step(one, opt_one, 1, [&](int) { return loss(one); });
    accumulate_and_step(many, opt_many, n, [&](int) { return loss(many); });
    for (const Parameter& p : one.parameters()) {
      auto a = p.tensor.values();
      auto b = many.get(p.name).tensor.values();
      for (std::size_t i = 0; i < a.size(); ++i) worst_accum = std::max(worst_accum, std::abs(double(a[i] - b[i])));
    }
    if (opt_many.steps() != 1) worst_accum = INFINITY;
  }

  AdamWConfig c;
  std::vector<real> p = {1.0}, grad = {1.0};
  AdamWSlot slot;
  adamw_update(p, grad, slot, c, true);
  // Hand iteration: m = 0.1, v = 0.01, m_hat = v_hat = 1.
  long double m = (1 - c.beta1) * 1.0L, v = (1 - c.beta2) * 1.0L;
  long double m_hat = m / (1 - (long double)c.beta1), v_hat = v / (1 - (long double)c.beta2);
  long double expected = 1.0L - c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * 1.0L);
  double adam_err = double(std::abs((long double)p[0] - expected));

  Outcome o;
  o.pass = clip_ok && worst_accum < 1e-12 && adam_err < 1e-10;
  o.detail = std::string("clip ") + (clip_ok ? "exact" : "WRONG") + " on 10005 values; n in {2,3,20} vs 1 batch max |diff| " +
             fmt("%.1e", worst_accum) + "; AdamW p' = " + fmt("%.20f", p[0]) + " vs hand " +
             fmt("%.20f", double(expected)) + " |diff| " + fmt("%.1e", adam_err);
  return o;
}

// 7. CER against a quadratic DP oracle plus hand cases.
Outcome cer_oracle() {
  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> len(0, 20);
  std::uniform_int_distribution<int> sym(0, 3);
  int mismatches = 0, pairs = 0;
  while (pairs < 1000) {
    std::string ref(len(rng), 'a'), hyp(len(rng), 'a');
    for (char& ch : ref) ch = static_cast<char>('a' + sym(rng));
    for (char& ch : hyp) ch = static_cast<char>('a' + sym(rng));
    if (ref.empty()) continue;
    ++pairs;
    double expected = double(testing::edit_distance(hyp, ref)) / double(ref.size());
    if (cer(hyp, ref) != expected) ++mismatches;
  }
  CerReport micro;
  micro.add({"u1", "x", std::string(10, 'a'), "", EditCounts{1, 0, 0, 10}, false});
  micro.add({"u2", "x", std::string(30, 'a'), "", EditCounts{0, 0, 0, 30}, false});
  double identity = cer("abcd", "abcd"), sub = cer("abxd", "abcd"), empty = cer("", "ab");
  double micro_cer = micro.overall_cer();
  Outcome o;
  o.pass = mismatches == 0 && identity == 0.0 && sub == 0.25 && empty == 1.0 && micro_cer == 0.025;
  o.detail = std::to_string(pairs - mismatches) + "/1000 pairs match; hand cases " + fmt("%g", identity) + ", " +
             fmt("%g", sub) + ", " + fmt("%g", empty) + ", " + fmt("%g", micro_cer);
  return o;
}

// 8. End-to-end toy benchmark, run twice through the CLI.
Outcome end_to_end() {
  std::vector<nlohmann::json> summaries;
  std::ostringstream detail;
  for (int run = 1; run <= 2; ++run) {
    fs::path out = g_work / ("e2e_run" + std::to_string(run));
    fs::remove_all(out);
    fs::create_directories(g_work);
    auto start = Clock::now();
    int code = run_cli("train --seed 1 --out " + out.string(), g_work / ("e2e_run" + std::to_string(run) + ".log"));
    double wall = seconds_since(start);
    if (code != 0) return {false, "run " + std::to_string(run) + " exited with " + std::to_string(code)};
    summaries.push_back(read_json(out / "summary.json"));
    detail << (run > 1 ? "; " : "") << "run " << run << " " << fmt("%.0f", wall) << " s";
    if (wall >= 1800) return {false, detail.str() + " (over 30 min)"};
  }
  const auto& stages = summaries[0].at("stages");
  std::vector<double> cers;
  for (const auto& s : stages) cers.push_back(s.at("report").at("overall").at("cer").get<double>());
  std::string per_stage;
  for (std::size_t i = 0; i < cers.size(); ++i) per_stage += (i ? " -> " : "") + fmt("%.4f%%", 100 * cers[i]);
  bool identical = summaries[0].at("stages").size() == summaries[1].at("stages").size();
  for (std::size_t i = 0; identical && i < stages.size(); ++i)
    identical = stages[i].at("report") == summaries[1].at("stages")[i].at("report") &&
                stages[i].at("final_loss") == summaries[1].at("stages")[i].at("final_loss");
  std::set<std::string> dialects;
  for (const auto& [tag, _] : stages.back().at("report").at("dialects").items()) dialects.insert(tag);
  bool ok = cers.size() == 4 && cers.back() < 0.05 && cers.back() <= cers.front() && identical && dialects.size() == 3;
  detail << "; held-out CER " << per_stage << " over " << stages.back().at("report").at("utterances") << " utts, "
         << dialects.size() << " dialects; rerun " << (identical ? "identical" : "DIFFERS");
  return {ok, detail.str()};
}

// 9. Sweep tables.
Outcome sweeps() {
  fs::path out = g_work / "sweeps";
  fs::remove_all(out);
  fs::create_directories(out);
  std::ofstream(out / "config.yaml") << R"(data: {eval_limit: 60}
training:
  steps: {1: 100, 2: 30, 3: 20, 4: 30}
)";
  struct Expect {
    std::string kind;
    std::size_t rows, columns;
  };
  std::ostringstream detail;
  bool ok = true;
  for (const Expect& e : {Expect{"projector", 4, 6}, Expect{"rate", 3, 5}, Expect{"stages", 8, 6}}) {
    int code = run_cli("sweep " + e.kind + " --config " + (out / "config.yaml").string() + " --out " +
                           (out / "tables").string(),
                       out / (e.kind + ".log"));
    nlohmann::json table;
    bool filled = code == 0;
    if (filled) {
      table = read_json(out / "tables" / e.kind / "table.json");
      filled = table.at("rows").size() == e.rows && table.at("columns").size() == e.columns;
      for (const auto& row : table.at("rows")) {
        filled = filled && row.size() == e.columns;
        for (const auto& cell : row) filled = filled && !cell.get<std::string>().empty();
      }
    }
    ok = ok && filled;
    detail << (detail.tellp() > 0 ? "; " : "") << e.kind << " " << (filled ? "" : "INCOMPLETE ")
           << (code == 0 ? std::to_string(table.at("rows").size()) + "x" + std::to_string(table.at("columns").size())
                         : "exit " + std::to_string(code));
  }
  detail << " (tables under " << (out / "tables").string() << ")";
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = fs::path(SPEECHLLM_ACCEPTANCE_WORK);
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},      {"ctc oracle", ctc_oracle},
      {"frame-rate arithmetic", frame_rates},  {"freeze soundness", freeze_soundness},
      {"lora invariants", lora_invariants},    {"clip/accumulation/optimizer", optimizer_checks},
      {"cer oracle", cer_oracle},              {"end-to-end toy benchmark", end_to_end},
      {"sweep tables", sweeps}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << number << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
