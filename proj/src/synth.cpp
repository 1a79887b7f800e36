#include "aal/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "aal/rng.hpp"

namespace aal {

namespace {

class Zipf {
 public:
  explicit Zipf(int n, double exponent = 1.0) {
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
      total += std::pow(r + 1.0, -exponent);
      cdf_.push_back(total);
    }
    for (double& c : cdf_) c /= total;
  }
  int draw(Rng& rng) const {
    const double u = rng.uniform();
    for (std::size_t i = 0; i < cdf_.size(); ++i) {
      if (u < cdf_[i]) return static_cast<int>(i);
    }
    return static_cast<int>(cdf_.size()) - 1;
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

EmbeddingTable SynthData::table() const {
  EmbeddingTable t(vectors.empty() ? 0 : vectors.front().size());
  for (std::size_t i = 0; i < words.size(); ++i) t.add(words[i], vectors[i]);
  return t;
}

SynthData generate_synthetic(const SynthConfig& c) {
  Rng rng(c.seed);
  SynthData d;
  auto direction = [&] {
    std::vector<double> u(c.dim, 0.0);
    double norm = 0.0;
    for (std::size_t j = 2; j < c.dim; ++j) {
      u[j] = rng.normal();
      norm += u[j] * u[j];
    }
    for (double& x : u) x /= std::sqrt(norm);
    return u;
  };
  auto add_word = [&](std::string name, double radius, double angle, const std::vector<double>* stance) {
    std::vector<double> v(c.dim, 0.0);
    v[0] = radius * std::cos(angle);
    v[1] = radius * std::sin(angle);
    for (std::size_t j = 2; j < c.dim; ++j) {
      v[j] = c.identity_scale * rng.normal() / std::sqrt(static_cast<double>(c.dim - 2));
      if (stance) v[j] += c.stance_signal * (*stance)[j];
    }
    d.words.push_back(std::move(name));
    d.vectors.push_back(std::move(v));
    return static_cast<int>(d.words.size()) - 1;
  };

  std::vector<int> function_words;
  for (int i = 0; i < c.function_words; ++i) function_words.push_back(add_word("w" + std::to_string(i), 0, 0, nullptr));
  std::vector<std::vector<int>> filler(c.topics);
  // [topic][stance][theme] -> word ids; stance 0 is PRO
  std::vector<std::array<std::vector<std::vector<int>>, 2>> stance(c.topics);
  std::vector<double> angle(c.topics);
  for (int t = 0; t < c.topics; ++t) {
    angle[t] = 2.0 * std::numbers::pi * (t + 0.5) / c.topics;
    const std::string p = "t" + std::to_string(t) + "_";
    for (int i = 0; i < c.filler_words; ++i) filler[t].push_back(add_word(p + "f" + std::to_string(i), 1.0, angle[t], nullptr));
    for (int side = 0; side < 2; ++side) {
      stance[t][side].resize(c.themes);
      for (int h = 0; h < c.themes; ++h) {
        const auto u = direction();
        for (int i = 0; i < c.theme_words; ++i) {
          const std::string name = p + (side == 0 ? "a" : "b") + std::to_string(h) + "_" + std::to_string(i);
          stance[t][side][h].push_back(add_word(name, 3.0, angle[t], &u));
        }
      }
    }
  }

  const Zipf zf(c.function_words), zfill(c.filler_words), ztheme(c.themes, c.theme_exponent);
  static constexpr double kProShare[] = {0.75, 0.25, 0.6, 0.4};

  for (int t = 0; t < c.topics; ++t) {
    const std::string topic = "topic" + std::to_string(t);
    const double pro_share = kProShare[t % 4];
    for (int i = 0; i < c.sentences_per_topic; ++i) {
      Sentence s;
      s.id = topic + "-" + std::to_string(i);
      s.topic = topic;
      const double pos = (i + 0.5) / c.sentences_per_topic;
      s.split = pos < c.train_share ? Split::train : pos < c.train_share + c.dev_share ? Split::dev : Split::test;
      auto plain = [&](int n) {
        for (int k = 0; k < n; ++k) {
          const int w = rng.bernoulli(0.5) ? function_words[zf.draw(rng)] : filler[t][zfill.draw(rng)];
          s.tokens.push_back(d.words[w]);
          s.gold.push_back(Label::NON);
        }
      };
      auto span = [&](bool is_pro, int n) {
        const auto& vocab = stance[t][is_pro ? 0 : 1][ztheme.draw(rng)];
        for (int k = 0; k < n; ++k) {
          const int w = vocab[rng.below(vocab.size())];
          s.tokens.push_back(d.words[w]);
          s.gold.push_back(is_pro ? Label::PRO : Label::CON);
        }
      };
      if (rng.bernoulli(c.argumentative_share)) {
        const bool is_pro = rng.bernoulli(pro_share);
        plain(2 + static_cast<int>(rng.below(4)));
        span(is_pro, 3 + static_cast<int>(rng.below(5)));
        if (rng.bernoulli(0.3)) {
          plain(1 + static_cast<int>(rng.below(2)));
          span(!is_pro, 3 + static_cast<int>(rng.below(4)));
        }
        plain(static_cast<int>(rng.below(4)));
      } else {
        plain(6 + static_cast<int>(rng.below(10)));
      }
      d.sentences.push_back(std::move(s));
    }
  }
  return d;
}

void write_synthetic(const std::filesystem::path& dir, const SynthData& data) {
  std::filesystem::create_directories(dir);
  write_corpus(dir / "corpus.tsv", data.sentences);
  std::ofstream out(dir / "embeddings.txt", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "embeddings.txt").string());
  char buf[32];
  for (std::size_t i = 0; i < data.words.size(); ++i) {
    out << data.words[i];
    for (double v : data.vectors[i]) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace aal
