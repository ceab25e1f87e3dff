#include "step/evaluate.hpp"

#include "step/errors.hpp"
#include "step/parallel.hpp"

namespace step {

std::size_t argmax(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.size(); ++c)
    if (logits[c] > logits[best]) best = c;
  return best;
}

std::vector<std::size_t> predict(const ProbeModel<float>& model, const Dataset& dataset,
                                 const std::vector<std::size_t>& clip_indices, std::size_t threads,
                                 const std::optional<CorruptionMode>& corruption) {
  std::vector<std::size_t> out(clip_indices.size());
  parallel_for(clip_indices.size(), threads, [&](std::size_t i) {
    const auto& f = dataset.features.at(clip_indices[i]);
    const auto logits = corruption ? predict_logits(model, corrupt_order(f, *corruption))
                                   : predict_logits(model, f);
    out[i] = argmax(logits);
  });
  return out;
}

EvalReport build_report(const std::vector<std::size_t>& labels,
                        const std::vector<std::size_t>& predictions,
                        const std::vector<std::string>& class_names, const SymmetricSplit& split) {
  const std::size_t classes = class_names.size();
  if (labels.size() != predictions.size()) throw ContractError("build_report: size mismatch");
  if (split.num_classes() != classes) {
    throw ContractError("build_report: symmetric split covers " + std::to_string(split.num_classes()) +
                        " classes, report has " + std::to_string(classes));
  }
  EvalReport r;
  r.class_names = class_names;
  r.total = labels.size();
  r.support.assign(classes, 0);
  r.per_class_acc.assign(classes, 0.0);
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) {
      throw IndexError("build_report: class index out of range");
    }
    ++r.confusion[labels[i]][predictions[i]];
    ++r.support[labels[i]];
  }

  std::size_t correct = 0, sym_correct = 0, nsym_correct = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t hits = r.confusion[c][c];
    correct += hits;
    if (r.support[c]) r.per_class_acc[c] = static_cast<double>(hits) / static_cast<double>(r.support[c]);
    if (split.is_symmetric(c)) {
      r.sym_support += r.support[c];
      sym_correct += hits;
    } else {
      r.nsym_support += r.support[c];
      nsym_correct += hits;
    }

    ClassConfusion note{c, std::nullopt, 0.0, false};
    if (auto m = split.mirror(c)) {
      note.partner = *m;
      note.is_mirror = true;
      if (r.support[c]) note.rate = static_cast<double>(r.confusion[c][*m]) / static_cast<double>(r.support[c]);
    } else {
      std::size_t best_count = 0;
      for (std::size_t p = 0; p < classes; ++p) {
        if (p != c && r.confusion[c][p] > best_count) {
          best_count = r.confusion[c][p];
          note.partner = p;
        }
      }
      if (best_count) note.rate = static_cast<double>(best_count) / static_cast<double>(r.support[c]);
    }
    r.confusions.push_back(note);
  }
  auto ratio = [](std::size_t a, std::size_t b) {
    return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  r.overall_acc = ratio(correct, r.total);
  r.sym_acc = ratio(sym_correct, r.sym_support);
  r.nsym_acc = ratio(nsym_correct, r.nsym_support);
  return r;
}

namespace {

std::vector<std::size_t> labels_of(const Dataset& dataset, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(dataset.manifest.clips[i].label);
  return out;
}

std::vector<std::size_t> nonempty_split(const Dataset& dataset, Split which) {
  auto idx = dataset.manifest.indices(which);
  if (idx.empty()) {
    throw ContractError("evaluate: the " + std::string(to_string(which)) + " split is empty");
  }
  return idx;
}

}  // namespace

EvalReport evaluate(const ProbeModel<float>& model, const Dataset& dataset,
                    const SymmetricSplit& split, Split which, std::size_t threads) {
  const auto idx = nonempty_split(dataset, which);
  if (dataset.manifest.num_classes() != model.config.num_classes) {
    throw ContractError("evaluate: dataset has " + std::to_string(dataset.manifest.num_classes()) +
                        " classes, probe has " + std::to_string(model.config.num_classes));
  }
  auto report = build_report(labels_of(dataset, idx), predict(model, dataset, idx, threads),
                             dataset.manifest.class_names, split);
  report.param_count = model.count_params();
  report.probe_gflops = estimate_probe_flops(model.config) / 1e9;
  return report;
}

void sensitivity_analysis(const ProbeModel<float>& model, const Dataset& dataset,
                          const SymmetricSplit& split, const std::vector<CorruptionMode>& modes,
                          EvalReport& report, Split which, std::size_t threads) {
  const auto idx = nonempty_split(dataset, which);
  const auto labels = labels_of(dataset, idx);
  for (const auto& mode : modes) {
    const auto preds = predict(model, dataset, idx, threads, mode);
    const auto corrupted = build_report(labels, preds, dataset.manifest.class_names, split);
    CorruptionResult res;
    res.mode = mode.name();
    res.overall_acc = corrupted.overall_acc;
    res.sym_acc = corrupted.sym_acc;
    res.nsym_acc = corrupted.nsym_acc;
    res.delta = report.overall_acc - corrupted.overall_acc;
    std::size_t mirrored = 0, sym_total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (auto m = split.mirror(labels[i])) {
        ++sym_total;
        if (preds[i] == *m) ++mirrored;
      }
    }
    res.mirror_rate = sym_total ? static_cast<double>(mirrored) / static_cast<double>(sym_total) : 0.0;
    report.corruption.push_back(res);
  }
}

double estimate_probe_flops(const ProbeConfig& cfg) {
  const double d = static_cast<double>(cfg.d_model);
  const double classes = static_cast<double>(cfg.num_classes);
  const double classifier = 2.0 * d * classes;
  const double len = static_cast<double>(cfg.sequence_length());
  const double feed_forward = 2.0 * 2.0 * d * 4.0 * d;  // per token
  switch (cfg.variant) {
    case ProbeVariant::Linear:
      return classifier;
    case ProbeVariant::Attentive:
      // One query: its projection, K/V projections of every token, one row of
      // scores plus its weighted sum, output projection and FF on the single
      // pooled token.
      return 2.0 * d * d + 2.0 * len * d * 2.0 * d + 2.0 * 2.0 * len * d + 2.0 * d * d +
             feed_forward + classifier;
    case ProbeVariant::SelfAttn:
    case ProbeVariant::Step:
      break;
  }
  // Q/K/V projections, scores q k^T and weighted sum a v (each L^2 d
  // multiply-adds), output projection.
  double flops = 2.0 * len * d * 3.0 * d + 2.0 * 2.0 * len * len * d + 2.0 * len * d * d + classifier;
  if (cfg.block_style == BlockStyle::FullBlock) flops += len * feed_forward;
  return flops;
}

}  // namespace step
