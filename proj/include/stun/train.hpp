#ifndef STUN_TRAIN_HPP_
#define STUN_TRAIN_HPP_

#include <cmath>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "stun/checkpoint.hpp"
#include "stun/errors.hpp"
#include "stun/file_io.hpp"
#include "stun/mining.hpp"
#include "stun/net.hpp"
#include "stun/optim.hpp"

namespace stun {

struct TrainState {
  long long epochs_completed = 0;
  long long steps = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<double> loss_history;     // one entry per optimizer step
  std::vector<double> epoch_mean_loss;  // zero for epochs with no steps
};

// Line-delimited JSON training log: {"step","epoch","lr","loss"} per step.
struct TrainLog {
  std::string path;
  std::string buf;

  void record(long long step, long long epoch, double lr, double loss) {
    nlohmann::json j;
    j["step"] = step;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["loss"] = loss;
    buf += j.dump();
    buf += "\n";
  }
  void flush() {
    if (!path.empty()) write_file_atomic(path, buf);
  }
};

namespace detail {

inline void validate_training_inputs(const Dataset& data,
                                     const ExperimentConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw DataError("dataset is empty");
  if (data.image_shape != cfg.image_shape)
    throw DataError("dataset image shape does not match config image_shape");
}

inline void guard_finite(double loss) {
  if (!std::isfinite(loss))
    throw DivergenceError("training loss is non-finite; aborting");
}

// Warn-only divergence watch: loss above 10x the first epoch's mean for
// three consecutive epochs.
struct DivergenceWatch {
  double initial = -1.0;
  int consecutive = 0;

  void epoch_done(double mean_loss, long long epoch) {
    if (initial < 0.0 && mean_loss > 0.0) {
      initial = mean_loss;
      return;
    }
    if (initial > 0.0 && mean_loss > 10.0 * initial) {
      if (++consecutive >= 3) {
        std::cerr << "warning: loss exceeded 10x initial for " << consecutive
                  << " consecutive epochs (epoch " << epoch << ")\n";
      }
    } else {
      consecutive = 0;
    }
  }
};

inline std::vector<Tensor> calibration_images(const Dataset& data,
                                              std::size_t cap = 64) {
  std::vector<Tensor> imgs;
  const std::size_t n = std::min(cap, data.size());
  imgs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) imgs.push_back(data.samples[i].image);
  return imgs;
}

}  // namespace detail

struct TeacherTrainResult {
  TeacherNet net;
  TrainState state;
};

// Standard metric-learning phase: mine violating tuples against the
// epoch-fresh teacher means, descend the configured loss with Adam.
// `dropout_active` turns on the stochastic regularization path used by the
// MC-dropout baseline; mining and inference stay deterministic either way.
inline TeacherTrainResult train_teacher(const Dataset& data,
                                        const ExperimentConfig& cfg,
                                        TrainLog* log = nullptr,
                                        bool dropout_active = false) {
  detail::validate_training_inputs(data, cfg);

  Rng init_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  TeacherTrainResult out;
  out.net = make_teacher(cfg.encoder, init_rng);
  out.net.extractor.calibrate_norms(detail::calibration_images(data));
  out.state.seed = cfg.seed;
  out.state.config_hash = config_hash(cfg);

  MiningPool pool = build_mining_pool(data, cfg);
  bool any_anchor = false;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (pool.has_positive(i)) {
      any_anchor = true;
      break;
    }
  if (!any_anchor) throw DataError("dataset has no anchor with a positive");

  Adam adam(cfg.learning_rate, cfg.lr_decay, cfg.weight_decay);
  auto blocks = out.net.blocks();
  adam.attach(blocks);
  const bool use_dropout = dropout_active && cfg.encoder.dropout_rate > 0.0;
  detail::DivergenceWatch watch;

  for (long long epoch = 0; epoch < cfg.epochs; ++epoch) {
    refresh_cache(pool, out.net, epoch);
    TupleBatch mined = mine_epoch(pool, cfg, epoch);

    std::vector<std::size_t> order(mined.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, 100000 + epoch));
    shuffle_rng.shuffle(order);

    double epoch_sum = 0.0;
    long long epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      TupleBatch batch;
      batch.kind = mined.kind;
      for (std::size_t t = begin; t < end; ++t) {
        const std::size_t u = order[t];
        batch.anchors.push_back(mined.anchors[u]);
        batch.positives.push_back(mined.positives[u]);
        if (!mined.negatives1.empty())
          batch.negatives1.push_back(mined.negatives1[u]);
        if (!mined.negatives2.empty())
          batch.negatives2.push_back(mined.negatives2[u]);
        if (!mined.similar.empty()) batch.similar.push_back(mined.similar[u]);
      }

      // Each referenced image is forwarded once; gradient contributions from
      // all tuples touching it are summed before the single backward pass.
      std::map<std::size_t, ForwardTrace> traces;
      std::vector<std::vector<double>> means(data.size());
      auto touch = [&](const std::vector<std::size_t>& idxs) {
        for (std::size_t i : idxs)
          if (!traces.count(i)) {
            ForwardTrace tr;
            out.net.forward_mean(data.samples[i].image, &tr,
                                 use_dropout ? &dropout_rng : nullptr);
            means[i] = tr.mean;
            traces.emplace(i, std::move(tr));
          }
      };
      touch(batch.anchors);
      touch(batch.positives);
      touch(batch.negatives1);
      touch(batch.negatives2);

      GradMap grads;
      const LossValue lv =
          tuple_loss(batch, means, cfg.margin, cfg.margin2, &grads);
      detail::guard_finite(lv.value);

      for (ParamBlock* b : blocks) b->zero_grad();
      for (auto& [idx, g] : grads) out.net.backward(traces.at(idx), g);
      adam.step(blocks, epoch);

      ++out.state.steps;
      out.state.loss_history.push_back(lv.value);
      if (log) log->record(out.state.steps, epoch, adam.lr_at(epoch), lv.value);
      epoch_sum += lv.value;
      ++epoch_steps;
    }
    const double epoch_mean = epoch_steps ? epoch_sum / epoch_steps : 0.0;
    out.state.epoch_mean_loss.push_back(epoch_mean);
    watch.epoch_done(epoch_mean, epoch);
    ++out.state.epochs_completed;
  }
  if (log) log->flush();
  return out;
}

struct StudentTrainResult {
  StudentNet net;
  TrainState state;
};

// Self-teaching phase: the student starts as a copy of the teacher and
// regresses its embeddings onto the frozen teacher means under the
// uncertainty-aware loss, over all samples, no tuples needed.
inline StudentTrainResult train_student(const TeacherNet& teacher,
                                        const Dataset& data,
                                        const ExperimentConfig& cfg,
                                        TrainLog* log = nullptr) {
  detail::validate_training_inputs(data, cfg);
  Rng init_rng(derive_seed(cfg.seed, 3));
  StudentTrainResult out;
  out.net = copy_from_teacher(teacher, init_rng);
  out.state.seed = cfg.seed;
  out.state.config_hash = config_hash(cfg);

  // Fixed targets: the teacher is never touched again.
  std::vector<std::vector<double>> targets(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    targets[i] = teacher.forward_mean(data.samples[i].image);

  Adam adam(cfg.learning_rate, cfg.lr_decay, cfg.weight_decay);
  auto blocks = out.net.blocks();
  adam.attach(blocks);
  detail::DivergenceWatch watch;

  for (long long epoch = 0; epoch < cfg.student_epochs(); ++epoch) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, 200000 + epoch));
    shuffle_rng.shuffle(order);

    double epoch_sum = 0.0;
    long long epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ForwardTrace> traces(end - begin);
      std::vector<std::vector<double>> batch_means(end - begin),
          batch_targets(end - begin), batch_vars(end - begin);
      for (std::size_t t = begin; t < end; ++t) {
        const std::size_t i = order[t];
        out.net.forward(data.samples[i].image, &traces[t - begin]);
        batch_means[t - begin] = traces[t - begin].mean;
        batch_vars[t - begin] = traces[t - begin].variance;
        batch_targets[t - begin] = targets[i];
      }
      std::vector<std::vector<double>> gmeans, gvars;
      const LossValue lv =
          student_loss(batch_means, batch_targets, batch_vars, &gmeans, &gvars);
      detail::guard_finite(lv.value);

      for (ParamBlock* b : blocks) b->zero_grad();
      for (std::size_t t = 0; t < traces.size(); ++t)
        out.net.backward(traces[t], gmeans[t], gvars[t]);
      adam.step(blocks, epoch);

      ++out.state.steps;
      out.state.loss_history.push_back(lv.value);
      if (log) log->record(out.state.steps, epoch, adam.lr_at(epoch), lv.value);
      epoch_sum += lv.value;
      ++epoch_steps;
    }
    const double epoch_mean = epoch_steps ? epoch_sum / epoch_steps : 0.0;
    out.state.epoch_mean_loss.push_back(epoch_mean);
    watch.epoch_done(epoch_mean, epoch);
    ++out.state.epochs_completed;
  }
  if (log) log->flush();
  return out;
}

// Baseline variance-only phase: extractor and mean head are frozen copies of
// the teacher, and only the variance head trains, maximizing the mutual
// likelihood score over geo-positive pairs.
inline StudentTrainResult train_pfe(const TeacherNet& teacher,
                                    const Dataset& data,
                                    const ExperimentConfig& cfg,
                                    TrainLog* log = nullptr) {
  detail::validate_training_inputs(data, cfg);
  Rng init_rng(derive_seed(cfg.seed, 4));
  StudentTrainResult out;
  out.net = copy_from_teacher(teacher, init_rng);
  out.state.seed = cfg.seed;
  out.state.config_hash = config_hash(cfg);

  // Frozen extractor: features and means are constants of training.
  std::vector<std::vector<double>> features(data.size()),
      means(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    ForwardTrace tr;
    out.net.extractor.forward(data.samples[i].image, &tr, nullptr);
    features[i] = tr.feature;
    means[i] = l2_normalize(tr.feature);
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = i + 1; j < data.size(); ++j)
      if (label_of_distance(
              geo_distance(data.samples[i].geo, data.samples[j].geo),
              cfg.positive_radius_m,
              cfg.negative_radius_m) == PairLabel::kPositive)
        pairs.emplace_back(i, j);
  if (pairs.empty()) throw DataError("dataset has no positive pairs");

  std::vector<ParamBlock*> head_blocks = {&out.net.variance_head.W,
                                          &out.net.variance_head.b};
  Adam adam(cfg.learning_rate, cfg.lr_decay, cfg.weight_decay);
  adam.attach(head_blocks);
  detail::DivergenceWatch watch;

  for (long long epoch = 0; epoch < cfg.student_epochs(); ++epoch) {
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(cfg.seed, 300000 + epoch));
    shuffle_rng.shuffle(order);

    double epoch_sum = 0.0;
    long long epoch_steps = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      for (ParamBlock* b : head_blocks) b->zero_grad();
      const double w = -1.0 / static_cast<double>(end - begin);
      double batch_loss = 0.0;
      for (std::size_t t = begin; t < end; ++t) {
        const auto [i, j] = pairs[order[t]];
        EmbeddingDistribution di{means[i],
                                 sigmoid(out.net.variance_head.forward(features[i]))};
        EmbeddingDistribution dj{means[j],
                                 sigmoid(out.net.variance_head.forward(features[j]))};
        std::vector<double> gvi(di.variance.size(), 0.0),
            gvj(dj.variance.size(), 0.0);
        // Loss is the negated score; gradients flow only into the variances.
        const double score =
            mls_score(di, dj, nullptr, nullptr, &gvi, &gvj, w);
        batch_loss += -score / static_cast<double>(end - begin);
        out.net.variance_head.backward(features[i],
                                       sigmoid_backward(di.variance, gvi));
        out.net.variance_head.backward(features[j],
                                       sigmoid_backward(dj.variance, gvj));
      }
      detail::guard_finite(batch_loss);
      adam.step(head_blocks, epoch);

      ++out.state.steps;
      out.state.loss_history.push_back(batch_loss);
      if (log) log->record(out.state.steps, epoch, adam.lr_at(epoch), batch_loss);
      epoch_sum += batch_loss;
      ++epoch_steps;
    }
    const double epoch_mean = epoch_steps ? epoch_sum / epoch_steps : 0.0;
    out.state.epoch_mean_loss.push_back(epoch_mean);
    watch.epoch_done(epoch_mean, epoch);
    ++out.state.epochs_completed;
  }
  if (log) log->flush();
  return out;
}

}  // namespace stun

#endif  // STUN_TRAIN_HPP_
