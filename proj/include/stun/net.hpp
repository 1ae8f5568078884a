#ifndef STUN_NET_HPP_
#define STUN_NET_HPP_

#include <memory>
#include <string>
#include <vector>

#include "stun/config.hpp"
#include "stun/errors.hpp"
#include "stun/layers.hpp"
#include "stun/types.hpp"

namespace stun {

// Activations cached by a forward pass for the matching backward pass.
struct ForwardTrace {
  std::vector<Tensor> conv_in;   // input map of each conv block
  std::vector<Tensor> relu_out;  // post-activation map of each block
  std::vector<Tensor> dropout_mask;
  Tensor final_map;              // input to pooling
  std::vector<double> pooled;
  std::vector<double> feature;   // extractor output z
  // mean head
  std::vector<double> mean;
  double feature_norm = 1.0;
  // variance head (student only)
  std::vector<double> variance;
};

// Shared feature extractor: conv stack -> frozen per-channel norm -> ReLU
// (-> dropout for the MC variant), generalized-mean pooling, linear
// projection to the embedding dimension.
struct Extractor {
  EncoderSpec spec;
  std::vector<ConvLayer> convs;
  std::vector<BatchNormLayer> norms;
  GemPool pool;
  LinearLayer proj;
  DropoutLayer dropout;

  void build(const EncoderSpec& s, Rng& rng) {
    if (s.backbone != "tiny_conv")
      throw ConfigError("encoder backbone '" + s.backbone +
                        "' is not available in this build; use 'tiny_conv'");
    s.validate();
    spec = s;
    convs.clear();
    norms.clear();
    int cin = 3;
    for (std::size_t k = 0; k < s.conv_widths.size(); ++k) {
      ConvLayer c;
      c.init("extractor.conv" + std::to_string(k), cin, s.conv_widths[k], rng);
      convs.push_back(std::move(c));
      BatchNormLayer n;
      n.init("extractor.norm" + std::to_string(k), s.conv_widths[k]);
      norms.push_back(std::move(n));
      cin = s.conv_widths[k];
    }
    pool.p = s.gem_p;
    pool.average = (s.pooling == "average");
    proj.init("extractor.proj", cin, s.embedding_dim, rng);
    dropout.rate = s.dropout_rate;
  }

  // `rng` enables the dropout layers (training / MC passes); null runs the
  // deterministic inference path.
  std::vector<double> forward(const Tensor& image, ForwardTrace* trace,
                              Rng* rng) const {
    Tensor x = image;
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    t.conv_in.clear();
    t.relu_out.clear();
    t.dropout_mask.clear();
    const bool use_dropout = rng != nullptr && dropout.rate > 0.0;
    for (std::size_t k = 0; k < convs.size(); ++k) {
      t.conv_in.push_back(x);
      Tensor c = convs[k].forward(x);
      Tensor n = norms[k].forward(c);
      Tensor r = relu(n);
      t.relu_out.push_back(r);
      if (use_dropout) {
        Tensor mask;
        x = dropout.forward(r, *rng, &mask);
        t.dropout_mask.push_back(std::move(mask));
      } else {
        x = std::move(r);
      }
    }
    t.final_map = x;
    t.pooled = pool.forward(t.final_map);
    t.feature = proj.forward(t.pooled);
    return t.feature;
  }

  // Backward from d(loss)/d(feature); accumulates parameter gradients.
  void backward(const ForwardTrace& t, const std::vector<double>& gfeature) {
    std::vector<double> gpooled = proj.backward(t.pooled, gfeature);
    Tensor g = pool.backward(t.final_map, t.pooled, gpooled);
    const bool used_dropout = !t.dropout_mask.empty();
    for (std::size_t k = convs.size(); k-- > 0;) {
      if (used_dropout) g = dropout.backward(t.dropout_mask[k], g);
      g = relu_backward(t.relu_out[k], g);
      g = norms[k].backward(g);
      g = convs[k].backward(t.conv_in[k], g);
    }
  }

  // Sets the per-channel normalization statistics from a sample of images,
  // block by block. Called once before training; the statistics are frozen
  // afterwards.
  void calibrate_norms(const std::vector<Tensor>& images) {
    std::vector<Tensor> maps(images.begin(), images.end());
    for (std::size_t k = 0; k < convs.size(); ++k) {
      std::vector<Tensor> conv_out;
      conv_out.reserve(maps.size());
      for (const Tensor& m : maps) conv_out.push_back(convs[k].forward(m));
      norms[k].set_stats_from(conv_out);
      maps.clear();
      for (Tensor& c : conv_out) maps.push_back(relu(norms[k].forward(c)));
    }
  }

  std::vector<ParamBlock*> blocks() {
    std::vector<ParamBlock*> out;
    for (std::size_t k = 0; k < convs.size(); ++k) {
      out.push_back(&convs[k].W);
      out.push_back(&convs[k].b);
      out.push_back(&norms[k].gamma);
      out.push_back(&norms[k].beta);
      out.push_back(&norms[k].running_mean);
      out.push_back(&norms[k].running_var);
    }
    out.push_back(&proj.W);
    out.push_back(&proj.b);
    return out;
  }
};

// Teacher: extractor plus a parameter-free L2-normalizing mean head.
struct TeacherNet {
  Extractor extractor;

  std::vector<double> forward_mean(const Tensor& image,
                                   ForwardTrace* trace = nullptr,
                                   Rng* rng = nullptr) const {
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    extractor.forward(image, &t, rng);
    t.mean = l2_normalize(t.feature, &t.feature_norm);
    return t.mean;
  }

  // Backward from d(loss)/d(mean); accumulates parameter gradients.
  void backward(const ForwardTrace& t, const std::vector<double>& gmean) {
    extractor.backward(t, l2_normalize_backward(t.mean, t.feature_norm, gmean));
  }

  std::vector<ParamBlock*> blocks() { return extractor.blocks(); }
};

// Student: same extractor architecture, same mean head, plus a variance
// head (one fully connected layer into a sigmoid) fed by the extractor
// output.
struct StudentNet {
  Extractor extractor;
  LinearLayer variance_head;

  EmbeddingDistribution forward(const Tensor& image,
                                ForwardTrace* trace = nullptr,
                                Rng* rng = nullptr) const {
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    extractor.forward(image, &t, rng);
    t.mean = l2_normalize(t.feature, &t.feature_norm);
    t.variance = sigmoid(variance_head.forward(t.feature));
    return EmbeddingDistribution{t.mean, t.variance};
  }

  // Backward from gradients on the mean and the variance output.
  void backward(const ForwardTrace& t, const std::vector<double>& gmean,
                const std::vector<double>& gvariance) {
    std::vector<double> gfeature =
        l2_normalize_backward(t.mean, t.feature_norm, gmean);
    std::vector<double> glogit = sigmoid_backward(t.variance, gvariance);
    std::vector<double> gfeat_var = variance_head.backward(t.feature, glogit);
    for (std::size_t i = 0; i < gfeature.size(); ++i)
      gfeature[i] += gfeat_var[i];
    extractor.backward(t, gfeature);
  }

  std::vector<ParamBlock*> blocks() {
    std::vector<ParamBlock*> out = extractor.blocks();
    out.push_back(&variance_head.W);
    out.push_back(&variance_head.b);
    return out;
  }
};

inline TeacherNet make_teacher(const EncoderSpec& spec, Rng& rng) {
  TeacherNet net;
  net.extractor.build(spec, rng);
  return net;
}

// Student initialization from a trained teacher: the teacher's mapping is
// the prior, so extractor and mean head are copied verbatim; the variance
// head starts with small uniform weights and zero bias (initial sigmoid
// output near 0.5).
inline StudentNet copy_from_teacher(const TeacherNet& teacher, Rng& rng) {
  StudentNet net;
  net.extractor = teacher.extractor;  // deep copy, value semantics
  const int d = teacher.extractor.spec.embedding_dim;
  net.variance_head.init("variance_head", d, d, rng, /*weight_scale=*/0.01);
  return net;
}

inline std::size_t parameter_count(std::vector<ParamBlock*> blocks) {
  std::size_t n = 0;
  for (const ParamBlock* b : blocks)
    if (!b->buffer) n += b->w.size();
  return n;
}

// Order- and value-sensitive digest over parameters and buffers; used to
// assert immutability.
inline std::uint64_t parameter_hash(std::vector<ParamBlock*> blocks) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const ParamBlock* b : blocks) {
    h = fnv1a64(b->name.data(), b->name.size(), h);
    h = fnv1a64(b->w.data(), b->w.size() * sizeof(double), h);
  }
  return h;
}

// Batched inference-mode forwards.
inline std::vector<std::vector<double>> teacher_forward(
    const TeacherNet& net, const std::vector<Tensor>& batch) {
  std::vector<std::vector<double>> out;
  out.reserve(batch.size());
  for (const Tensor& img : batch) out.push_back(net.forward_mean(img));
  return out;
}

inline std::vector<EmbeddingDistribution> student_forward(
    const StudentNet& net, const std::vector<Tensor>& batch) {
  std::vector<EmbeddingDistribution> out;
  out.reserve(batch.size());
  for (const Tensor& img : batch) out.push_back(net.forward(img));
  return out;
}

// Monte-Carlo dropout inference: `passes` stochastic forwards; returns the
// per-dimension sample mean (re-normalized to unit L2) and sample variance.
inline std::pair<std::vector<std::vector<double>>,
                 std::vector<std::vector<double>>>
mc_dropout_forward(const TeacherNet& net, const std::vector<Tensor>& batch,
                   int passes, Rng& rng) {
  if (passes < 2)
    throw std::invalid_argument("mc_dropout_forward: passes must be >= 2");
  const std::size_t d = static_cast<std::size_t>(net.extractor.spec.embedding_dim);
  std::vector<std::vector<double>> means(batch.size()),
      vars(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::vector<double>> draws(passes);
    for (int t = 0; t < passes; ++t)
      draws[t] = net.forward_mean(batch[i], nullptr, &rng);
    // Statistics on draws shifted by the first one: deterministic passes
    // (zero dropout) then give an exactly zero variance.
    std::vector<double> mu(d, 0.0), var(d, 0.0);
    for (const auto& dr : draws)
      for (std::size_t k = 0; k < d; ++k) mu[k] += dr[k] - draws[0][k];
    for (std::size_t k = 0; k < d; ++k) mu[k] /= passes;
    for (const auto& dr : draws)
      for (std::size_t k = 0; k < d; ++k) {
        const double r = (dr[k] - draws[0][k]) - mu[k];
        var[k] += r * r;
      }
    for (std::size_t k = 0; k < d; ++k) {
      var[k] /= passes;
      mu[k] += draws[0][k];
    }
    means[i] = l2_normalize(mu);
    vars[i] = std::move(var);
  }
  return {std::move(means), std::move(vars)};
}

}  // namespace stun

#endif  // STUN_NET_HPP_
