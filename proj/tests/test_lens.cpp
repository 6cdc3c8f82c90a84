#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "moelens/lens/cluster.hpp"
#include "moelens/lens/io.hpp"
#include "moelens/lens/profile.hpp"
#include "moelens/lens/svg.hpp"
#include "moelens/lens/tsne.hpp"

using namespace moelens;
using namespace moelens::lens;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.dim = 16;
    cfg.n_layers = 2;
    cfg.head_dim = 8;
    cfg.n_heads = 2;
    cfg.n_kv_heads = 2;
    cfg.ffn_hidden_dim = 16;
    cfg.context_len = 16;
    cfg.vocab_size = 32;
    cfg.num_experts = 4;
    cfg.topk_experts = 2;
    cfg.validate();
    return cfg;
}

Tensor blob_data(std::size_t per_blob, double separation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Tensor x({2 * per_blob, 5});
    for (std::size_t i = 0; i < 2 * per_blob; ++i)
        for (std::size_t j = 0; j < 5; ++j)
            x.at(i, j) = nd(rng) + (i < per_blob ? 0.0 : separation);
    return x;
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

}  // namespace

TEST_CASE("expert profile matches the hand calculation on crafted logits") {
    // layer 0: two tokens with logits summing to (2, 0, 0); layer 1 sums (0, 4, 0)
    Tensor g0({2, 3}), g1({1, 3});
    g0.at(0, 0) = 1.5;
    g0.at(1, 0) = 0.5;
    g1.at(0, 1) = 4.0;
    auto prof = expert_profile({g0, g1});
    REQUIRE(prof.per_layer.size() == 2);
    REQUIRE(prof.concatenated.size() == 6);
    const double z0 = std::exp(2.0) + 2.0;
    CHECK(prof.per_layer[0][0] == doctest::Approx(std::exp(2.0) / z0).epsilon(1e-12));
    CHECK(prof.per_layer[0][1] == doctest::Approx(1.0 / z0).epsilon(1e-12));
    const double z1 = std::exp(4.0) + 2.0;
    CHECK(prof.per_layer[1][1] == doctest::Approx(std::exp(4.0) / z1).epsilon(1e-12));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(prof.concatenated[i] == prof.per_layer[0][i]);
        CHECK(prof.concatenated[3 + i] == prof.per_layer[1][i]);
    }
}

TEST_CASE("profiles are per-layer simplex vectors for random inputs") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<std::size_t> pick_l(1, 12), pick_e(2, 8), pick_n(1, 4);
        const std::size_t e = pick_e(rng), layers = pick_n(rng);
        std::vector<Tensor> gates;
        for (std::size_t i = 0; i < layers; ++i) {
            Tensor g({pick_l(rng), e});
            fill_normal(g, rng, 2.0);
            gates.push_back(std::move(g));
        }
        auto prof = expert_profile(gates);
        CHECK(prof.concatenated.size() == layers * e);
        for (const auto& layer : prof.per_layer) {
            double sum = 0;
            for (double v : layer) {
                CHECK(v > 0.0);
                sum += v;
            }
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("the profile is invariant to token order") {
    std::mt19937_64 rng(2);
    Tensor g({8, 4});
    fill_normal(g, rng, 1.5);
    auto prof = expert_profile({g});
    Tensor gp({8, 4});
    std::vector<std::size_t> perm = {5, 0, 7, 2, 1, 6, 3, 4};
    for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t j = 0; j < 4; ++j) gp.at(t, j) = g.at(perm[t], j);
    auto prof_p = expert_profile({gp});
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(std::abs(prof.concatenated[i] - prof_p.concatenated[i]) <= 1e-12);
}

TEST_CASE("a constant logit shift leaves the profile unchanged") {
    std::mt19937_64 rng(3);
    Tensor g({6, 5});
    fill_normal(g, rng, 1.0);
    auto prof = expert_profile({g});
    Tensor gs = g;
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += 3.7;
    auto prof_s = expert_profile({gs});
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(std::abs(prof.concatenated[i] - prof_s.concatenated[i]) <= 1e-10);
}

TEST_CASE("mean normalization softens long-document profiles") {
    // duplicate a token's logits 10x: the summed profile sharpens, the
    // mean-normalized one is identical to the single-token profile
    Tensor g1({1, 3});
    g1.at(0, 0) = 1.0;
    g1.at(0, 1) = -1.0;
    Tensor g10({10, 3});
    for (std::size_t t = 0; t < 10; ++t) {
        g10.at(t, 0) = 1.0;
        g10.at(t, 1) = -1.0;
    }
    auto base = expert_profile({g1});
    auto summed = expert_profile({g10});
    auto normed = expert_profile({g10}, /*mean_normalize=*/true);
    CHECK(summed.concatenated[0] > base.concatenated[0]);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK(std::abs(normed.concatenated[i] - base.concatenated[i]) <= 1e-12);
}

TEST_CASE("collect_profiles labels, truncates and skips") {
    Model model(tiny_config());
    model.init_weights(4);
    std::vector<int> long_doc(40, 7);  // beyond context_len 16
    std::vector<LabeledDocument> docs = {
        {"mol", {1, 2, 3, 4}},
        {"prose", {}},
        {"prose", long_doc},
        {"mol", {1, 2, 3, 4}},
    };
    auto res = collect_profiles(model, docs);
    CHECK(res.skipped_empty == 1);
    REQUIRE(res.profiles.size() == 3);
    CHECK(res.profiles[0].label == "mol");
    CHECK(res.profiles[1].label == "prose");
    CHECK(res.profiles[2].label == "mol");
    CHECK(res.profiles[0].concatenated.size() ==
          tiny_config().n_layers * tiny_config().num_experts);
    // identical documents produce identical profiles
    for (std::size_t i = 0; i < res.profiles[0].concatenated.size(); ++i)
        CHECK(res.profiles[0].concatenated[i] == res.profiles[2].concatenated[i]);
}

TEST_CASE("input affinities are symmetric, hollow and normalized") {
    auto x = blob_data(8, 3.0, 5);
    auto p = input_affinities(x, 4.0);
    const std::size_t n = x.dim(0);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(p.at(i, i) == 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            CHECK(p.at(i, j) >= 0.0);
            CHECK(p.at(i, j) == p.at(j, i));
            sum += p.at(i, j);
        }
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("duplicate-heavy input makes perplexity calibration fail loudly") {
    Tensor x({8, 3});  // all-equal rows: every pairwise distance is zero
    x.fill(1.0);
    CHECK_THROWS_WITH_AS(input_affinities(x, 2.0), doctest::Contains("infeasible"),
                         std::runtime_error);
}

TEST_CASE("tsne precondition errors") {
    Tensor tiny({3, 4});
    TsneConfig cfg;
    CHECK_THROWS_AS(tsne_reduce(tiny, cfg), std::invalid_argument);
    Tensor x = blob_data(6, 3.0, 6);
    cfg.perplexity = 4.0;  // (12-1)/3 = 3.67
    CHECK_THROWS_AS(tsne_reduce(x, cfg), std::invalid_argument);
    cfg.perplexity = 0.0;
    CHECK_THROWS_AS(tsne_reduce(x, cfg), std::invalid_argument);
}

TEST_CASE("tsne separates two well-separated gaussian blobs") {
    const std::size_t per = 15;
    auto x = blob_data(per, 10.0, 7);
    TsneConfig cfg;
    cfg.perplexity = 5.0;
    cfg.iterations = 500;
    auto res = tsne_reduce(x, cfg);
    REQUIRE(res.coords.dim(0) == 2 * per);
    REQUIRE(res.kl_history.size() == 500);

    // the max intra-blob distance must be smaller than the min inter-blob distance
    auto dist = [&](std::size_t i, std::size_t j) {
        double s = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double d = res.coords.at(i, c) - res.coords.at(j, c);
            s += d * d;
        }
        return std::sqrt(s);
    };
    double max_intra = 0, min_inter = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 2 * per; ++i)
        for (std::size_t j = i + 1; j < 2 * per; ++j) {
            if ((i < per) == (j < per))
                max_intra = std::max(max_intra, dist(i, j));
            else
                min_inter = std::min(min_inter, dist(i, j));
        }
    CHECK(min_inter > max_intra);
}

TEST_CASE("tsne converges: final KL is below the post-exaggeration KL") {
    auto x = blob_data(10, 6.0, 8);
    TsneConfig cfg;
    cfg.perplexity = 4.0;
    cfg.iterations = 600;
    auto res = tsne_reduce(x, cfg);
    CHECK(res.kl_history.back() <= res.kl_history[cfg.exaggeration_iters] + 1e-12);
    CHECK(res.kl_history.back() >= 0.0);
}

TEST_CASE("tsne is bit-identical across runs with the same seed") {
    auto x = blob_data(8, 4.0, 9);
    TsneConfig cfg;
    cfg.perplexity = 3.0;
    cfg.iterations = 200;
    cfg.seed = 17;
    auto a = tsne_reduce(x, cfg);
    auto b = tsne_reduce(x, cfg);
    for (std::size_t i = 0; i < a.coords.size(); ++i) CHECK(a.coords[i] == b.coords[i]);
    CHECK(a.kl_history == b.kl_history);
}

TEST_CASE("simplex corners embed near-symmetrically") {
    // 4 groups of 4 points near the corners of the 3-simplex: by symmetry,
    // every group centroid should end up roughly equidistant from the others
    std::mt19937_64 rng(10);
    std::normal_distribution<double> nd(0.0, 0.01);
    Tensor x({16, 4});
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 4; ++j) x.at(i, j) = (i / 4 == j ? 1.0 : 0.0) + nd(rng);
    TsneConfig cfg;
    cfg.perplexity = 3.0;
    cfg.iterations = 500;
    auto res = tsne_reduce(x, cfg);
    double cent[4][3] = {};
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t c = 0; c < 3; ++c) cent[i / 4][c] += res.coords.at(i, c) / 4.0;
    std::vector<double> gaps;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) {
            double s = 0;
            for (std::size_t c = 0; c < 3; ++c)
                s += (cent[a][c] - cent[b][c]) * (cent[a][c] - cent[b][c]);
            gaps.push_back(std::sqrt(s));
        }
    const double lo = *std::min_element(gaps.begin(), gaps.end());
    const double hi = *std::max_element(gaps.begin(), gaps.end());
    CHECK(lo > 0.0);
    CHECK(hi / lo < 1.35);  // near-regular tetrahedron
}

TEST_CASE("cluster report on identical one-hot groups") {
    auto make = [](std::size_t hot, const std::string& lab) {
        ExpertChoiceProfile p;
        p.concatenated = {0, 0, 0, 0};
        p.concatenated[hot] = 1.0;
        p.label = lab;
        return p;
    };
    std::vector<ExpertChoiceProfile> profiles = {make(0, "a"), make(0, "a"), make(2, "b"),
                                                 make(2, "b")};
    auto rep = cluster_report(profiles);
    CHECK(rep.mean_intra_cosine == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rep.mean_inter_cosine == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(rep.pairs.size() == 1);
    CHECK(rep.pairs[0].label_a == "a");
    CHECK(rep.pairs[0].label_b == "b");
    CHECK(rep.pairs[0].mean_cosine_distance == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cluster report is invariant to profile order") {
    std::mt19937_64 rng(11);
    std::vector<ExpertChoiceProfile> profiles;
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int i = 0; i < 12; ++i) {
        ExpertChoiceProfile p;
        p.label = i % 3 == 0 ? "x" : (i % 3 == 1 ? "y" : "z");
        for (int j = 0; j < 6; ++j) p.concatenated.push_back(std::abs(nd(rng)) + 0.01);
        profiles.push_back(std::move(p));
    }
    auto rep1 = cluster_report(profiles);
    std::shuffle(profiles.begin(), profiles.end(), rng);
    auto rep2 = cluster_report(profiles);
    CHECK(std::abs(rep1.mean_intra_cosine - rep2.mean_intra_cosine) <= 1e-12);
    CHECK(std::abs(rep1.mean_inter_cosine - rep2.mean_inter_cosine) <= 1e-12);
    REQUIRE(rep1.pairs.size() == rep2.pairs.size());
    for (std::size_t i = 0; i < rep1.pairs.size(); ++i) {
        CHECK(rep1.pairs[i].label_a == rep2.pairs[i].label_a);
        CHECK(rep1.pairs[i].label_b == rep2.pairs[i].label_b);
        CHECK(std::abs(rep1.pairs[i].mean_cosine_distance -
                       rep2.pairs[i].mean_cosine_distance) <= 1e-12);
    }
}

TEST_CASE("cluster report rejects degenerate label sets") {
    ExpertChoiceProfile p;
    p.concatenated = {1.0, 0.0};
    p.label = "only";
    CHECK_THROWS_AS(cluster_report({p, p}), std::invalid_argument);
    ExpertChoiceProfile q = p;
    q.label = "single";
    CHECK_THROWS_WITH_AS(cluster_report({p, p, q}), doctest::Contains("single"),
                         std::invalid_argument);
}

TEST_CASE("silhouette is near one for tight distant clusters and near zero for mixed") {
    Tensor good({6, 3});
    for (std::size_t i = 0; i < 3; ++i) good.at(i, 0) = 0.01 * static_cast<double>(i);
    for (std::size_t i = 3; i < 6; ++i) good.at(i, 0) = 100.0 + 0.01 * static_cast<double>(i);
    std::vector<std::string> labels = {"a", "a", "a", "b", "b", "b"};
    CHECK(silhouette_score(good, labels) > 0.99);

    // both labels straddle the same two locations: no real separation
    Tensor mixed({6, 3});
    for (std::size_t i = 0; i < 6; ++i) mixed.at(i, 0) = static_cast<double>(i % 2);
    std::vector<std::string> overlapped = {"a", "a", "a", "b", "b", "b"};
    CHECK(std::abs(silhouette_score(mixed, overlapped)) < 0.3);
    CHECK_THROWS_AS(silhouette_score(good, std::vector<std::string>(6, "a")),
                    std::invalid_argument);
}

TEST_CASE("svg plot carries one marker per point per panel plus the legend") {
    namespace fs = std::filesystem;
    auto x = blob_data(5, 4.0, 12);
    TsneConfig cfg;
    cfg.perplexity = 2.0;
    cfg.iterations = 50;
    auto res = tsne_reduce(x, cfg);
    std::vector<std::string> labels(10);
    for (std::size_t i = 0; i < 10; ++i) labels[i] = i < 5 ? "left" : "right";
    const auto path = (fs::temp_directory_path() / "moelens_plot_test.svg").string();
    emit_plot(res, labels, path);
    const std::string svg = slurp(path);
    CHECK(svg.rfind("<svg", 0) == 0);
    // 3 panels x 10 points + 2 legend markers
    CHECK(count_occurrences(svg, "<circle") == 3 * 10 + 2);
    CHECK(svg.find(">left<") != std::string::npos);
    CHECK(svg.find(">right<") != std::string::npos);
    // the two labels use distinct palette colors
    CHECK(svg.find(plot_palette()[0]) != std::string::npos);
    CHECK(svg.find(plot_palette()[1]) != std::string::npos);

    // deterministic bytes on re-emission
    const auto path2 = (fs::temp_directory_path() / "moelens_plot_test2.svg").string();
    emit_plot(res, labels, path2);
    CHECK(slurp(path) == slurp(path2));
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("profile and embedding csv writers round numbers reversibly") {
    namespace fs = std::filesystem;
    ExpertChoiceProfile p;
    p.label = "mol";
    p.concatenated = {0.125, 1.0 / 3.0, 0.5416666666666666};
    const auto ppath = (fs::temp_directory_path() / "moelens_profiles_test.csv").string();
    write_profiles({p}, ppath);
    const std::string text = slurp(ppath);
    CHECK(text.rfind("mol,", 0) == 0);
    // %.17g keeps doubles exactly
    CHECK(text.find("0.125") != std::string::npos);
    CHECK(text.find("0.33333333333333331") != std::string::npos);
    fs::remove(ppath);

    EmbeddingResult emb;
    emb.coords = Tensor({2, 3});
    emb.coords.at(0, 0) = -1.5;
    emb.coords.at(1, 2) = 2.25;
    const auto epath = (fs::temp_directory_path() / "moelens_embed_test.csv").string();
    write_embedding(emb, {"a", "b"}, epath);
    const std::string etext = slurp(epath);
    CHECK(etext.rfind("a,-1.5,", 0) == 0);
    CHECK(etext.find("2.25") != std::string::npos);
    fs::remove(epath);
}
