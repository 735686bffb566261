// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <vector>

#include "chvt/checkpoint.hpp"
#include "chvt/model.hpp"
#include "chvt/training.hpp"

using namespace chvt;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 20;
  c.d_model = 8;
  c.d_ff = 16;
  c.n_heads = 2;
  c.K = 3;
  c.max_len = 6;
  c.dropout = 0.0;
  return c;
}

std::vector<TokenId> ids(std::initializer_list<int> xs) { return {xs.begin(), xs.end()}; }

Vector row(const Matrix& m, Eigen::Index i) { return m.row(i).transpose(); }

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_config();
  c.K = 0;
  EXPECT_THROW(c.validate(), ContractError);
  c = small_config();
  c.use_clv = c.use_dlv = false;
  EXPECT_THROW(c.validate(), ContractError);
  EXPECT_EQ(small_config().d_z(), small_config().d_model);
}

TEST(Encode, ShapeAndDeterminism) {
  const ChvtModel m(small_config(), 1);
  for (int n = 1; n <= 6; ++n) {
    std::vector<TokenId> x(static_cast<std::size_t>(n), 7);
    const auto out = m.encode(x);
    EXPECT_EQ(out.states.rows(), n);
    EXPECT_EQ(out.states.cols(), 8);
    EXPECT_EQ(out.context_len, n);
    EXPECT_EQ(out.response_len, 0);
    EXPECT_FALSE(out.truncated);
  }
  EXPECT_EQ(m.encode(ids({5, 6, 7})).states, m.encode(ids({5, 6, 7})).states);
}

TEST(Encode, PositionsMatter) {
  const ChvtModel m(small_config(), 2);
  const Matrix a = m.encode(ids({5, 6, 7})).states;
  const Matrix b = m.encode(ids({6, 5, 7})).states;
  EXPECT_GT((a - b).norm(), 1e-6);
}

TEST(Encode, OverlongInputIsTruncatedAndFlagged) {
  const ChvtModel m(small_config(), 3);
  const auto out = m.encode(ids({5, 6, 7, 8, 9, 10, 11, 12}));
  EXPECT_TRUE(out.truncated);
  EXPECT_EQ(out.states.rows(), 6);
  EXPECT_EQ(out.states, m.encode(ids({7, 8, 9, 10, 11, 12})).states);
  EXPECT_THROW(m.encode(ids({25})), ContractError);
  EXPECT_THROW(m.encode(std::vector<TokenId>{}), ContractError);
}

TEST(Heads, ShapesAndZeroWeights) {
  ChvtModel m(small_config(), 4);
  const Matrix h = m.encode(ids({5, 6, 7, 8})).states;
  EXPECT_EQ(m.recognition_heads(h.topRows(1)).size(), 1u);
  EXPECT_EQ(m.prior_heads(h).size(), 4u);
  m.parameters().at("rec.W_u").value.setZero();
  m.parameters().at("prior.W_u").value.setZero();
  for (const auto& g : m.recognition_heads(h)) EXPECT_EQ(g, DiagGaussian::standard(8));
  for (const auto& g : m.prior_heads(h)) EXPECT_EQ(g, DiagGaussian::standard(8));
  ChvtModel m2(small_config(), 4);
  m2.parameters().at("rec.W_d").value.setZero();
  for (const auto& g : m2.recognition_heads(h)) EXPECT_EQ(g, DiagGaussian::standard(8));
}

TEST(Heads, PriorIgnoresTheResponse) {
  const ChvtModel m(small_config(), 5);
  auto prior_of = [&](const std::vector<TokenId>& resp, Matrix& post_mu) {
    corpus::DialoguePair pair{ids({5, 6, 7}), resp, "", ""};
    Graph g(false);
    ForwardContext f(g, m.parameters());
    const ExampleGraph ex = build_example(m, f, pair, LatentDraw::posterior_mean, nullptr);
    post_mu = ex.posterior.mu.value();
    return std::make_pair(Matrix(ex.prior.mu.value()), Matrix(ex.prior.log_var.value()));
  };
  Matrix post_a, post_b;
  const auto a = prior_of(ids({8, 9}), post_a);
  const auto b = prior_of(ids({12, 13, 14, 15}), post_b);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_NE(post_a, post_b);
}

TEST(SentenceLatent, Examples) {
  const DiagGaussian g(Vector::Constant(3, 0.4), Vector::Constant(3, -0.2));
  EXPECT_EQ(sentence_latent({g}), g);
  EXPECT_EQ(sentence_latent({g, g, g}), g);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  std::vector<DiagGaussian> comps;
  Vector mu_sum = Vector::Zero(3), lv_sum = Vector::Zero(3);
  for (int i = 0; i < 3; ++i) {
    Vector mu(3), lv(3);
    for (int k = 0; k < 3; ++k) {
      mu(k) = nd(rng);
      lv(k) = nd(rng);
    }
    mu_sum += mu;
    lv_sum += lv;
    comps.emplace_back(mu, lv);
  }
  const DiagGaussian s = sentence_latent(comps);
  EXPECT_NEAR((s.mu - mu_sum / 3.0).norm(), 0.0, 1e-15);
  EXPECT_NEAR((s.log_var - lv_sum / 3.0).norm(), 0.0, 1e-15);
}

TEST(Hlv, Reconstruction) {
  std::mt19937_64 rng(7);
  Matrix H = Matrix::Random(4, 5);
  Vector z = Vector::Random(5);
  const auto set = build_hlv(z, H);
  EXPECT_EQ(set.L.rows(), 4);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_EQ(row(set.L, j) - row(H, j), z);
  EXPECT_EQ(build_hlv(Vector::Zero(5), H).L, H);
  EXPECT_EQ(row(build_hlv(z, Matrix::Zero(1, 5)).L, 0), z);
  EXPECT_THROW(build_hlv(Vector::Zero(4), H), ContractError);
}

TEST(Memory, BroadcastAddsLatentToEveryRow) {
  const Matrix h = Matrix::Random(3, 4);
  EXPECT_EQ(contextual_memory(h, Vector::Zero(4)), h);
  const Vector a = Vector::Random(4), b = Vector::Random(4);
  const Matrix d = contextual_memory(h, a) - contextual_memory(h, b);
  EXPECT_EQ(d.rows(), 3);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR((row(d, i) - (a - b)).norm(), 0.0, 1e-14);
}

TEST(DecodeLogprob, ProbabilitiesAreNormalisedAndSummed) {
  const ChvtModel m(small_config(), 8);
  const Matrix mem = m.encode(ids({5, 6, 7})).states;
  const auto r = m.decode_logprob(mem, ids({9, 10, 11}));
  EXPECT_EQ(r.per_token.size(), 4);  // three tokens plus the end token
  EXPECT_TRUE((r.per_token.array() <= 0.0).all());
  EXPECT_NEAR(r.total, r.per_token.sum(), 1e-12);
  const Vector lp = m.next_token_log_probs(mem, ids({corpus::kBos, 9}));
  EXPECT_NEAR(lp.array().exp().sum(), 1.0, 1e-9);
}

TEST(DecodeLogprob, CausalMaskHolds) {
  const ChvtModel m(small_config(), 9);
  const Matrix mem = m.encode(ids({5, 6})).states;
  const auto a = m.decode_logprob(mem, ids({9, 10, 11, 12}));
  const auto b = m.decode_logprob(mem, ids({9, 10, 15, 16}));
  // target i depends on inputs BOS..r_i; r_1, r_2 unchanged -> entries 0..1 equal
  EXPECT_EQ(a.per_token(0), b.per_token(0));
  EXPECT_EQ(a.per_token(1), b.per_token(1));
  EXPECT_NE(a.per_token(2), b.per_token(2));
}

TEST(DecodeLogprob, OverlongResponseIsFlagged) {
  const ChvtModel m(small_config(), 10);
  const Matrix mem = m.encode(ids({5})).states;
  const auto r = m.decode_logprob(mem, ids({5, 6, 7, 8, 9, 10, 11, 12}));
  EXPECT_TRUE(r.truncated);
  EXPECT_EQ(r.per_token.size(), 7);
}

TEST(JointInput, LayoutAndSegments) {
  ModelConfig c = small_config();
  const ChvtModel m(c, 11);
  const auto in = m.joint_input(ids({5, 6}), ids({7, 8, 9}));
  EXPECT_EQ(in.ids, ids({5, 6, corpus::kSep, 7, 8, 9}));
  EXPECT_EQ(in.segments, (std::vector<int>{0, 0, 0, 1, 1, 1}));
  EXPECT_EQ(in.head_begin, 0);
  EXPECT_EQ(in.head_rows, 2);
  const auto enc = m.encode(in);
  EXPECT_EQ(enc.context_len, 2);
  EXPECT_EQ(enc.response_len, 4);
  c.latent_source = LatentSource::cls_token;
  const ChvtModel mc(c, 11);
  const auto in2 = mc.joint_input(ids({5, 6}), ids({7}));
  EXPECT_EQ(in2.ids, ids({corpus::kBos, 5, 6, corpus::kSep, 7}));
  EXPECT_EQ(in2.head_rows, 1);
}

TEST(LearnedMixing, WeightsFormADistribution) {
  ModelConfig c = small_config();
  c.mixing_weights = MixingWeights::learned;
  ChvtModel m(c, 12);
  m.parameters().at("mix.query_post").value.setRandom();
  const Matrix h = m.encode(ids({5, 6, 7, 8})).states;
  const Vector w = m.mixing_weight_values(h, true);
  EXPECT_EQ(w.size(), 4);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_TRUE((w.array() > 0).all());
  const Vector u = ChvtModel(small_config(), 12).mixing_weight_values(h, true);
  EXPECT_EQ(u, Vector::Constant(4, 0.25));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ChvtModel m(small_config(), 13);
  RunConfig rc;
  rc.model = small_config();
  rc.seed = 13;
  const auto path = (std::filesystem::temp_directory_path() / "chvt_model_roundtrip.ckpt").string();
  write_checkpoint(path, make_checkpoint(rc, {"<pad>", "<unk>", "<s>", "</s>", "<sep>", "x"}, m.parameters(), nullptr,
                                         42, "rng"));
  const Checkpoint ck = read_checkpoint(path);
  EXPECT_EQ(ck.step, 42);
  EXPECT_EQ(ck.rng_state, "rng");
  EXPECT_EQ(ck.vocab.size(), 6u);
  EXPECT_EQ(serialize_config(ck.config), serialize_config(rc));
  ChvtModel other(ck.config.model, 999);
  load_parameters(ck, other.parameters());
  const auto x = ids({5, 6, 7});
  EXPECT_EQ(m.encode(x).states, other.encode(x).states);
  const Matrix mem = m.encode(x).states;
  EXPECT_EQ(m.decode_logprob(mem, ids({8, 9})).per_token, other.decode_logprob(mem, ids({8, 9})).per_token);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsForeignFiles) {
  const auto path = (std::filesystem::temp_directory_path() / "chvt_not_a_ckpt.bin").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT plus some bytes";
  }
  EXPECT_THROW(read_checkpoint(path), VersionMismatch);
  std::filesystem::remove(path);
}

TEST(ModelGradients, KlGradientWithRespectToRecognitionWeights) {
  ModelConfig c = small_config();
  ChvtModel m(c, 14);
  corpus::DialoguePair pair{ids({5, 6, 7}), ids({8, 9}), "", ""};
  auto kl_value = [&]() {
    Graph g(false);
    ForwardContext f(g, m.parameters());
    return build_example(m, f, pair, LatentDraw::posterior_mean, nullptr).kl.scalar();
  };
  m.parameters().zero_grad();
  {
    Graph g(true);
    ForwardContext f(g, m.parameters(), false, nullptr, 0.0);
    g.backward(build_example(m, f, pair, LatentDraw::posterior_mean, nullptr).kl);
  }
  for (const char* name : {"rec.W_d", "rec.W_u"}) {
    Parameter& p = m.parameters().at(name);
    for (Eigen::Index i = 0; i < p.value.size(); i += 5) {
      const double x0 = p.value.data()[i];
      p.value.data()[i] = x0 + 1e-5;
      const double fp = kl_value();
      p.value.data()[i] = x0 - 1e-5;
      const double fm = kl_value();
      p.value.data()[i] = x0;
      const double fd = (fp - fm) / 2e-5;
      const double an = p.grad.data()[i];
      EXPECT_LE(std::abs(an - fd), 1e-4 * std::max(std::abs(fd), 1e-3)) << name << "[" << i << "]";
    }
  }
}
