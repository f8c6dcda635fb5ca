#include "speechllm/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "speechllm/error.h"

namespace speechllm {

namespace {

constexpr real kNegInf = -std::numeric_limits<real>::infinity();

real log_add(real a, real b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const real hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

int ctc_min_frames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) {
    if (target[i] == target[i - 1]) ++n;
  }
  return n;
}

Tensor ctc_loss(const Tensor& logits, std::span<const int> target) {
  if (logits.rank() != 2) throw ContractViolation("ctc_loss expects [T, V+1] logits");
  const int frames = logits.rows();
  const int classes = logits.cols();
  const int blank = classes - 1;
  for (int label : target) {
    if (label < 0 || label >= blank) {
      throw ContractViolation("ctc_loss: target label " + std::to_string(label) + " outside [0, " +
                              std::to_string(blank) + ")");
    }
  }
  const int needed = ctc_min_frames(target);
  if (frames < std::max(needed, 1)) {
    throw InfeasibleAlignmentError("ctc_loss: target needs " + std::to_string(needed) + " frames, logits have " +
                                   std::to_string(frames));
  }

  // Blank-interleaved label sequence: _ l1 _ l2 _ ... _
  const int ext = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> labels(static_cast<std::size_t>(ext), blank);
  for (std::size_t i = 0; i < target.size(); ++i) labels[2 * i + 1] = target[i];

  // Row-wise log-softmax.
  const auto& in = logits.node().value;
  auto log_probs = std::make_shared<std::vector<real>>(in.size());
  for (int t = 0; t < frames; ++t) {
    const std::size_t off = static_cast<std::size_t>(t) * classes;
    real mx = kNegInf;
    for (int k = 0; k < classes; ++k) mx = std::max(mx, in[off + k]);
    real z = 0;
    for (int k = 0; k < classes; ++k) z += std::exp(in[off + k] - mx);
    const real lse = mx + std::log(z);
    for (int k = 0; k < classes; ++k) (*log_probs)[off + k] = in[off + k] - lse;
  }
  const auto lp = [&](int t, int k) { return (*log_probs)[static_cast<std::size_t>(t) * classes + k]; };
  const auto skip_allowed = [&](int s) { return labels[static_cast<std::size_t>(s)] != blank && s >= 2 &&
                                                labels[static_cast<std::size_t>(s)] != labels[static_cast<std::size_t>(s - 2)]; };

  auto alpha = std::make_shared<std::vector<real>>(static_cast<std::size_t>(frames) * ext, kNegInf);
  const auto A = [&](int t, int s) -> real& { return (*alpha)[static_cast<std::size_t>(t) * ext + s]; };
  A(0, 0) = lp(0, labels[0]);
  if (ext > 1) A(0, 1) = lp(0, labels[1]);
  for (int t = 1; t < frames; ++t) {
    for (int s = 0; s < ext; ++s) {
      real acc = A(t - 1, s);
      if (s >= 1) acc = log_add(acc, A(t - 1, s - 1));
      if (skip_allowed(s)) acc = log_add(acc, A(t - 1, s - 2));
      if (acc != kNegInf) A(t, s) = acc + lp(t, labels[static_cast<std::size_t>(s)]);
    }
  }
  real log_total = A(frames - 1, ext - 1);
  if (ext > 1) log_total = log_add(log_total, A(frames - 1, ext - 2));
  if (log_total == kNegInf) throw InfeasibleAlignmentError("ctc_loss: no alignment has nonzero probability");

  std::vector<int> saved_labels = labels;
  return detail::make_result(
      Shape{}, {-log_total}, {logits.node_ptr()},
      [log_probs, alpha, saved_labels, frames, classes, ext, blank, log_total](detail::Node& self) {
        const auto lp = [&](int t, int k) { return (*log_probs)[static_cast<std::size_t>(t) * classes + k]; };
        const auto A = [&](int t, int s) { return (*alpha)[static_cast<std::size_t>(t) * ext + s]; };
        const auto label = [&](int s) { return saved_labels[static_cast<std::size_t>(s)]; };
        const auto skip_from = [&](int s) { return label(s) != blank && s + 2 < ext && label(s) != label(s + 2); };

        // beta_t(s): log probability of finishing from (t, s), emission at t included.
        std::vector<real> beta(static_cast<std::size_t>(frames) * ext, kNegInf);
        const auto B = [&](int t, int s) -> real& { return beta[static_cast<std::size_t>(t) * ext + s]; };
        B(frames - 1, ext - 1) = lp(frames - 1, label(ext - 1));
        if (ext > 1) B(frames - 1, ext - 2) = lp(frames - 1, label(ext - 2));
        for (int t = frames - 2; t >= 0; --t) {
          for (int s = 0; s < ext; ++s) {
            real acc = B(t + 1, s);
            if (s + 1 < ext) acc = log_add(acc, B(t + 1, s + 1));
            if (skip_from(s)) acc = log_add(acc, B(t + 1, s + 2));
            if (acc != kNegInf) B(t, s) = acc + lp(t, label(s));
          }
        }

        auto& g = self.parents[0]->ensure_grad();
        const real upstream = self.grad[0];
        std::vector<real> occupancy(static_cast<std::size_t>(classes));
        for (int t = 0; t < frames; ++t) {
          std::fill(occupancy.begin(), occupancy.end(), real(0));
          for (int s = 0; s < ext; ++s) {
            const real a = A(t, s), b = B(t, s);
            if (a == kNegInf || b == kNegInf) continue;
            occupancy[static_cast<std::size_t>(label(s))] += std::exp(a + b - lp(t, label(s)) - log_total);
          }
          const std::size_t off = static_cast<std::size_t>(t) * classes;
          for (int k = 0; k < classes; ++k) {
            g[off + k] += upstream * (std::exp(lp(t, k)) - occupancy[static_cast<std::size_t>(k)]);
          }
        }
      });
}

std::vector<int> ctc_greedy_decode(const Tensor& logits) {
  if (logits.rank() != 2) throw ContractViolation("ctc_greedy_decode expects [T, V+1] logits");
  const int frames = logits.rows(), classes = logits.cols();
  const int blank = classes - 1;
  const auto v = logits.values();
  std::vector<int> out;
  int previous = -1;
  for (int t = 0; t < frames; ++t) {
    const auto row = v.subspan(static_cast<std::size_t>(t) * classes, static_cast<std::size_t>(classes));
    const int best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best != blank && best != previous) out.push_back(best);
    previous = best;
  }
  return out;
}

}  // namespace speechllm
