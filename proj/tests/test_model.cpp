#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "stun/checkpoint.hpp"
#include "stun/net.hpp"
#include "stun/optim.hpp"
#include "stun/rng.hpp"

using namespace stun;
using Catch::Approx;

namespace {

EncoderSpec tiny_spec(int d = 8, double dropout = 0.0) {
  EncoderSpec s;
  s.backbone = "tiny_conv";
  s.conv_widths = {4, 6};
  s.pooling = "gem";
  s.gem_p = 3.0;
  s.embedding_dim = d;
  s.dropout_rate = dropout;
  return s;
}

Tensor random_image(Rng& rng, std::size_t c = 3, std::size_t h = 16,
                    std::size_t w = 16) {
  Tensor img({c, h, w});
  for (double& v : img.data) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("teacher forward produces unit-norm deterministic embeddings") {
  Rng rng(11);
  TeacherNet net = make_teacher(tiny_spec(), rng);
  Rng img_rng(12);
  std::vector<Tensor> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_image(img_rng));
  batch.push_back(batch[0]);  // duplicated image

  const auto means = teacher_forward(net, batch);
  REQUIRE(means.size() == 5);
  for (const auto& m : means) {
    CHECK(m.size() == 8);
    CHECK(std::abs(l2_norm(m) - 1.0) <= 1e-5);
  }
  // duplicated image gives identical rows (normalization is frozen)
  CHECK(means[4] == means[0]);
  // inference is bit-deterministic
  CHECK(teacher_forward(net, batch) == means);
}

TEST_CASE("teacher forward rejects wrong channel count") {
  Rng rng(13);
  TeacherNet net = make_teacher(tiny_spec(), rng);
  Tensor bad({1, 16, 16});
  CHECK_THROWS_AS(net.forward_mean(bad), std::invalid_argument);
}

TEST_CASE("student forward honors the distribution invariants") {
  Rng rng(14);
  TeacherNet teacher = make_teacher(tiny_spec(), rng);
  StudentNet student = copy_from_teacher(teacher, rng);
  Rng img_rng(15);
  const Tensor img = random_image(img_rng);
  const EmbeddingDistribution e = student.forward(img);
  CHECK(e.mean.size() == 8);
  CHECK(e.variance.size() == 8);
  CHECK(std::abs(l2_norm(e.mean) - 1.0) <= 1e-5);
  for (double v : e.variance) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
  // student initialized from the teacher reproduces its means bit-exactly
  CHECK(e.mean == teacher.forward_mean(img));
}

TEST_CASE("copy_from_teacher deep-copies and fresh-initializes the variance head") {
  Rng rng(16);
  TeacherNet teacher = make_teacher(tiny_spec(), rng);
  StudentNet student = copy_from_teacher(teacher, rng);

  bool any_nonzero = false;
  for (double w : student.variance_head.W.w) any_nonzero |= w != 0.0;
  CHECK(any_nonzero);
  for (double b : student.variance_head.b.w) CHECK(b == 0.0);

  // initial sigmoid output sits near 0.5
  Rng img_rng(17);
  const EmbeddingDistribution e = student.forward(random_image(img_rng));
  for (double v : e.variance) CHECK(v == Approx(0.5).margin(0.2));

  // mutating the student must not touch the teacher
  const std::uint64_t teacher_hash = parameter_hash(teacher.blocks());
  student.extractor.convs[0].W.w[0] += 1.0;
  CHECK(parameter_hash(teacher.blocks()) == teacher_hash);
}

TEST_CASE("student parameter count exceeds the teacher by exactly the variance head") {
  Rng rng(18);
  const int d = 8;
  TeacherNet teacher = make_teacher(tiny_spec(d), rng);
  StudentNet student = copy_from_teacher(teacher, rng);
  const std::size_t pt = parameter_count(teacher.blocks());
  const std::size_t ps = parameter_count(student.blocks());
  CHECK(ps == pt + static_cast<std::size_t>(d) * d + d);
}

TEST_CASE("generalized-mean pooling with p=1 equals average pooling") {
  Rng rng(19);
  Tensor map({5, 7, 7});
  for (double& v : map.data) v = rng.uniform();
  GemPool gem;
  gem.p = 1.0;
  gem.average = false;
  GemPool avg;
  avg.average = true;
  const auto a = gem.forward(map);
  const auto b = avg.forward(map);
  for (std::size_t c = 0; c < a.size(); ++c)
    CHECK(a[c] == Approx(b[c]).margin(1e-6));
}

TEST_CASE("gem pooling approaches max pooling for large p") {
  Tensor map({1, 2, 2});
  map.data = {0.1, 0.2, 0.9, 0.4};
  GemPool gem;
  gem.p = 64.0;
  CHECK(gem.forward(map)[0] == Approx(0.9).margin(0.05));
}

TEST_CASE("norm calibration sets stats and the frozen path keeps them") {
  Rng rng(20);
  TeacherNet net = make_teacher(tiny_spec(), rng);
  Rng img_rng(21);
  std::vector<Tensor> imgs;
  for (int i = 0; i < 6; ++i) imgs.push_back(random_image(img_rng));
  net.extractor.calibrate_norms(imgs);
  const std::vector<double> mean0 = net.extractor.norms[0].running_mean.w;
  const std::vector<double> var0 = net.extractor.norms[0].running_var.w;
  bool moved = false;
  for (double m : mean0) moved |= m != 0.0;
  CHECK(moved);  // calibration actually used the data

  // training-style steps: forward, backward, optimizer; statistics and the
  // frozen affine parameters must not move
  Adam adam(1e-2, 1.0, 0.0);
  auto blocks = net.blocks();
  adam.attach(blocks);
  for (int step = 0; step < 3; ++step) {
    ForwardTrace tr;
    net.forward_mean(imgs[step], &tr);
    std::vector<double> g(tr.mean.size(), 1.0);
    for (ParamBlock* b : blocks) b->zero_grad();
    net.backward(tr, g);
    adam.step(blocks, 0);
  }
  CHECK(net.extractor.norms[0].running_mean.w == mean0);
  CHECK(net.extractor.norms[0].running_var.w == var0);
  for (const auto& n : net.extractor.norms) {
    for (double gm : n.gamma.w) CHECK(gm == 1.0);
    for (double bt : n.beta.w) CHECK(bt == 0.0);
  }
}

TEST_CASE("network parameter gradients match finite differences") {
  Rng rng(22);
  TeacherNet teacher = make_teacher(tiny_spec(6), rng);
  Rng img_rng(23);
  std::vector<Tensor> calib;
  for (int i = 0; i < 4; ++i) calib.push_back(random_image(img_rng, 3, 12, 12));
  teacher.extractor.calibrate_norms(calib);
  StudentNet net = copy_from_teacher(teacher, rng);
  const Tensor img = random_image(img_rng, 3, 12, 12);

  // scalar probe: loss = c_mean . mean + c_var . variance
  std::vector<double> c_mean(6), c_var(6);
  for (double& v : c_mean) v = img_rng.uniform(-1, 1);
  for (double& v : c_var) v = img_rng.uniform(-1, 1);
  auto loss = [&]() {
    const EmbeddingDistribution e = net.forward(img);
    return dot(e.mean, c_mean) + dot(e.variance, c_var);
  };

  ForwardTrace tr;
  net.forward(img, &tr);
  for (ParamBlock* b : net.blocks()) b->zero_grad();
  net.backward(tr, c_mean, c_var);

  Rng pick(24);
  const double h = 1e-6;
  for (ParamBlock* b : net.blocks()) {
    if (b->buffer || b->w.empty() || !b->trainable) continue;
    for (int probe = 0; probe < 4; ++probe) {
      const std::size_t k = pick.index(b->w.size());
      const double keep = b->w[k];
      b->w[k] = keep + h;
      const double fp = loss();
      b->w[k] = keep - h;
      const double fm = loss();
      b->w[k] = keep;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = b->g[k];
      INFO(b->name << "[" << k << "] analytic " << analytic << " numeric "
                   << numeric);
      CHECK(std::abs(analytic - numeric) <=
            1e-4 * std::max({1.0, std::abs(analytic), std::abs(numeric)}));
    }
  }
}

TEST_CASE("mc dropout forward") {
  Rng rng(25);
  Rng img_rng(26);
  std::vector<Tensor> batch = {random_image(img_rng), random_image(img_rng)};

  SECTION("zero dropout rate gives exactly zero variance") {
    TeacherNet net = make_teacher(tiny_spec(8, 0.0), rng);
    Rng mc(1);
    const auto [means, vars] = mc_dropout_forward(net, batch, 5, mc);
    for (const auto& v : vars)
      for (double x : v) CHECK(x == 0.0);
    for (const auto& m : means) CHECK(std::abs(l2_norm(m) - 1.0) <= 1e-9);
  }

  SECTION("stochastic passes differ across seeds and reproduce under one") {
    TeacherNet net = make_teacher(tiny_spec(8, 0.2), rng);
    Rng mc1(7), mc2(7), mc3(8);
    const auto r1 = mc_dropout_forward(net, batch, 40, mc1);
    const auto r2 = mc_dropout_forward(net, batch, 40, mc2);
    const auto r3 = mc_dropout_forward(net, batch, 40, mc3);
    CHECK(r1.first == r2.first);
    CHECK(r1.second == r2.second);
    CHECK(r1.first != r3.first);
    bool any_positive = false;
    for (const auto& v : r1.second)
      for (double x : v) any_positive |= x > 0.0;
    CHECK(any_positive);
  }

  SECTION("fewer than two passes is rejected") {
    TeacherNet net = make_teacher(tiny_spec(8, 0.2), rng);
    Rng mc(1);
    CHECK_THROWS_AS(mc_dropout_forward(net, batch, 1, mc),
                    std::invalid_argument);
  }
}

TEST_CASE("dropout layer semantics") {
  DropoutLayer drop;
  drop.rate = 0.5;
  Tensor x({1, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = 1.0;
  Rng rng(27);
  Tensor mask;
  const Tensor y = drop.forward(x, rng, &mask);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((y.data[i] == 0.0 || y.data[i] == Approx(2.0)));
    CHECK(y.data[i] == Approx(mask.data[i] * 2.0));
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Rng rng(28);
  TeacherNet teacher = make_teacher(tiny_spec(), rng);
  Rng img_rng(29);
  std::vector<Tensor> calib = {random_image(img_rng), random_image(img_rng)};
  teacher.extractor.calibrate_norms(calib);
  StudentNet student = copy_from_teacher(teacher, rng);

  const Tensor img = random_image(img_rng);
  const auto dir = std::filesystem::temp_directory_path() / "stun_ckpt_test";
  std::filesystem::create_directories(dir);

  const std::string tpath = (dir / "teacher.ckpt").string();
  save_checkpoint(tpath, teacher, NetKind::kTeacher, 123, "cafebabe");
  LoadedCheckpoint lt = load_checkpoint(tpath);
  CHECK(lt.kind == NetKind::kTeacher);
  CHECK(lt.training_step == 123);
  CHECK(lt.config_hash == "cafebabe");
  CHECK(lt.teacher.forward_mean(img) == teacher.forward_mean(img));
  CHECK(parameter_hash(lt.teacher.blocks()) ==
        parameter_hash(teacher.blocks()));

  const std::string spath = (dir / "student.ckpt").string();
  save_checkpoint(spath, student, NetKind::kStudent, 77, "cafebabe");
  LoadedCheckpoint ls = load_checkpoint(spath);
  REQUIRE(ls.holds_student());
  const EmbeddingDistribution a = ls.student.forward(img);
  const EmbeddingDistribution b = student.forward(img);
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);

  // corrupting the magic is detected
  std::string raw = read_file(tpath);
  raw[0] = 'X';
  const std::string bad = (dir / "bad.ckpt").string();
  write_file_atomic(bad, raw);
  CHECK_THROWS_AS(load_checkpoint(bad), DataError);
}

TEST_CASE("named deep backbones are rejected by the net factory") {
  EncoderSpec s = tiny_spec();
  s.backbone = "resnet50_gem";
  Rng rng(30);
  CHECK_THROWS_AS(make_teacher(s, rng), ConfigError);
}
