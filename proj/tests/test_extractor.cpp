#include "gradcheck.hpp"
#include "seqfusion/bench.hpp"
#include "seqfusion/extractor.hpp"

#include <doctest.h>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <set>

using namespace seqfusion;
using namespace seqfusion::testing;

namespace {

Vector unit(Eigen::Index d, Eigen::Index i) {
    Vector v = Vector::Zero(d);
    v(i) = 1.0;
    return v;
}

double reference_constraint(const Matrix& A, const Matrix& Vw, int V) {
    const Eigen::Index B = A.cols();
    double total = 0.0;
    for (Eigen::Index s = 0; s < B; ++s) {
        double denom = 0.0;
        for (Eigen::Index o = 0; o < B; ++o) denom += std::exp(cosine(A.col(s), A.col(o)));
        for (int v = 0; v < V; ++v) total += -std::log(std::exp(cosine(A.col(s), Vw.col(s * V + v))) / denom);
    }
    return total / static_cast<double>(B * V);
}

Matrix random_orthogonal(Eigen::Index d, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, rng));
    return qr.householderQ() * Matrix::Identity(d, d);
}

std::vector<Dataset> family_sets(int length, std::uint64_t seed) {
    std::vector<Dataset> out;
    int i = 0;
    for (auto [k, p] : {std::pair{FamilyKind::sine, 12}, std::pair{FamilyKind::sawtooth, 18},
                        std::pair{FamilyKind::random_walk, 12}}) {
        SyntheticFamilySpec s;
        s.kind = k;
        s.period = p;
        s.length = length;
        s.seed = seed + static_cast<std::uint64_t>(i++);
        out.push_back(generate_synthetic(s));
    }
    return out;
}

TransferMatrix uniform_tm(const std::vector<Dataset>& ds, double same, double cross) {
    TransferMatrix tm;
    for (const auto& d : ds) tm.dataset_names.push_back(d.name);
    const auto n = static_cast<Eigen::Index>(ds.size());
    tm.g = Matrix::Constant(n, n, cross);
    tm.g.diagonal().setConstant(same);
    return tm;
}

}  // namespace

TEST_CASE("encode with zero weights is zero") {
    const ExtractorParams p = ExtractorParams::zeros(ExtractorDims{});
    CHECK(encode(p, Vector::LinSpaced(36, -1, 1)).isZero(0.0));
}

TEST_CASE("encode matches a straight-line oracle") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        ExtractorDims dims{4 + static_cast<int>(rng.below(10)), 2 + static_cast<int>(rng.below(10)),
                           1 + static_cast<int>(rng.below(6))};
        const ExtractorParams p = ExtractorParams::random(dims, rng);
        const Vector x = random_matrix(dims.window_len, 1, rng).col(0);
        const auto& w = p.weights;
        Vector ref(dims.dim);
        for (int o = 0; o < dims.dim; ++o) {
            double acc = w["b2"](o, 0);
            for (int h = 0; h < dims.hidden; ++h) {
                double pre = w["b1"](h, 0);
                for (int t = 0; t < dims.window_len; ++t) pre += w["W1"](h, t) * x(t);
                acc += w["W2"](o, h) * std::max(pre, 0.0);
            }
            ref(o) = acc;
        }
        const Vector e = encode(p, x);
        CHECK((e - ref).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(encode(p, x) == e);
    }
    const ExtractorParams p = ExtractorParams::zeros(ExtractorDims{});
    CHECK_THROWS(encode(p, Vector::Zero(10)));
}

TEST_CASE("masking") {
    const Vector w = Vector::LinSpaced(36, 1, 36);
    const auto views = mask_series(w, MaskSpec{0.25, 3, 7});
    REQUIRE(views.size() == 3);
    std::set<std::vector<int>> patterns;
    for (const auto& v : views) {
        std::vector<int> zeros;
        for (int i = 0; i < 36; ++i) {
            if (v(i) == 0.0) zeros.push_back(i);
            else CHECK(v(i) == w(i));
        }
        CHECK(zeros.size() == 9);
        patterns.insert(zeros);
    }
    CHECK(patterns.size() == 3);
    CHECK(w == Vector::LinSpaced(36, 1, 36));
    const auto again = mask_series(w, MaskSpec{0.25, 3, 7});
    for (std::size_t i = 0; i < 3; ++i) CHECK(again[i] == views[i]);
    CHECK_THROWS(mask_series(w, MaskSpec{0.0, 3, 7}));
    CHECK_THROWS(mask_series(w, MaskSpec{0.25, 0, 7}));
}

TEST_CASE("constraint loss hand examples") {
    ContrastiveBatch eq{Matrix::Ones(3, 2), Matrix::Ones(3, 2), 1};
    CHECK(constraint_loss(eq) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix A(3, 3);
    A << unit(3, 0), unit(3, 1), unit(3, 2);
    const double e = std::exp(1.0);
    CHECK(constraint_loss(ContrastiveBatch{A, A, 1}) == doctest::Approx(-std::log(e / (e + 2))).epsilon(1e-12));

    CHECK_THROWS_WITH(constraint_loss(ContrastiveBatch{Matrix::Ones(3, 1), Matrix::Ones(3, 1), 1}), "no negatives");
}

TEST_CASE("constraint loss matches a reference loop and is rotation invariant") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(6));
        const Eigen::Index B = 2 + static_cast<Eigen::Index>(rng.below(6));
        const int V = 1 + static_cast<int>(rng.below(4));
        const ContrastiveBatch b{random_matrix(d, B, rng), random_matrix(d, B * V, rng), V};
        const double loss = constraint_loss(b);
        CHECK(std::abs(loss - reference_constraint(b.anchors, b.views, V)) < 1e-9);
        const Matrix Q = random_orthogonal(d, rng);
        CHECK(std::abs(constraint_loss(ContrastiveBatch{Q * b.anchors, Q * b.views, V}) - loss) < 1e-9);
    }
}

TEST_CASE("transferability loss") {
    Rng rng(8);
    std::vector<TransferPair> fit;
    for (int i = 0; i < 5; ++i) {
        TransferPair p{random_matrix(4, 1, rng).col(0), random_matrix(4, 1, rng).col(0), 0.0};
        p.g = cosine(p.a, p.b);
        fit.push_back(p);
    }
    CHECK(transferability_loss(fit) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(transferability_loss({TransferPair{unit(3, 0), unit(3, 1), 1.0}}) == doctest::Approx(1.0));
    CHECK(transferability_loss({TransferPair{Vector::Zero(3), unit(3, 1), 0.5}}) == doctest::Approx(0.25));

    for (int trial = 0; trial < 30; ++trial) {
        std::vector<TransferPair> pairs;
        double ref = 0.0;
        const int n = 1 + static_cast<int>(rng.below(8));
        for (int i = 0; i < n; ++i) {
            TransferPair p{random_matrix(5, 1, rng).col(0), random_matrix(5, 1, rng).col(0), rng.uniform(-1, 1)};
            const double c = p.a.dot(p.b) / (p.a.norm() * p.b.norm());
            ref += (p.g - c) * (p.g - c);
            pairs.push_back(p);
        }
        const double loss = transferability_loss(pairs);
        CHECK(loss >= 0.0);
        CHECK(std::abs(loss - ref / n) < 1e-9);
    }
}

TEST_CASE("combined objective gradient matches finite differences") {
    Rng rng(99);
    for (int i = 0; i < 20; ++i) {
        const GradReport r = check_extractor_instance(random_extractor_instance(rng));
        INFO("worst " << r.worst);
        CHECK(r.max_rel < 1e-4);
    }
}

TEST_CASE("combined objective on the small reference shape") {
    Rng rng(5);
    ExtractorInstance in;
    for (;;) {
        in = random_extractor_instance(rng);
        if (in.params.dims.window_len == 8 && in.params.dims.dim == 4 && in.batch.anchors.cols() == 4) break;
    }
    const GradReport r = check_extractor_instance(in);
    CHECK(r.max_rel < 1e-4);
    const ObjectiveValue ov = objective_and_grad(in.params, in.batch);
    CHECK(ov.total == doctest::Approx(ov.reconstruction + ov.transferability + in.batch.lambda * ov.constraint));
}

TEST_CASE("transferability pairs only cross datasets") {
    Rng rng(6);
    auto in = random_extractor_instance(rng);
    std::fill(in.batch.dataset_index.begin(), in.batch.dataset_index.end(), 0);
    in.batch.g = Matrix::Constant(1, 1, 0.3);
    CHECK(objective_and_grad(in.params, in.batch).transferability == 0.0);
}

TEST_CASE("extractor training") {
    const auto sets = family_sets(400, 10);
    const TransferMatrix tm = uniform_tm(sets, 0.9, -0.5);
    ExtractorTrainConfig cfg;
    cfg.epochs = 15;
    cfg.seed = 4;
    const MaskSpec mask{0.25, 3, 4};
    const ExtractorDims dims{};

    SUBCASE("deterministic") {
        const auto a = train_extractor(sets, tm, cfg, mask, dims);
        const auto b = train_extractor(sets, tm, cfg, mask, dims);
        CHECK(bit_identical(a.weights, b.weights));
        CHECK(save_extractor(a) == save_extractor(b));
        CHECK(a.training_log.size() == 15);
    }
    SUBCASE("pure reconstruction decreases") {
        ExtractorTrainConfig c = cfg;
        c.lambda = 0.0;
        const std::vector<Dataset> one{sets[0]};
        TransferMatrix t1;
        t1.dataset_names = {sets[0].name};
        t1.g = Matrix::Constant(1, 1, 1.0);
        const auto p = train_extractor(one, t1, c, mask, dims);
        CHECK(p.training_log.back().total < p.training_log.front().total);
        CHECK(p.training_log.back().transferability == 0.0);
        CHECK(p.training_log.back().total == doctest::Approx(p.training_log.back().reconstruction));
    }
    SUBCASE("missing pair is named") {
        TransferMatrix partial = tm;
        partial.dataset_names.pop_back();
        partial.g = partial.g.topLeftCorner(2, 2).eval();
        CHECK_THROWS_WITH(train_extractor(sets, partial, cfg, mask, dims), doctest::Contains(sets.back().name.c_str()));
    }
}

TEST_CASE("trained representations cluster by family") {
    const auto sets = family_sets(1000, 20);
    const TransferMatrix tm = uniform_tm(sets, 0.9, -0.5);
    ExtractorTrainConfig cfg;
    cfg.epochs = 100;
    cfg.seed = 2;
    const auto p = train_extractor(sets, tm, cfg, MaskSpec{}, ExtractorDims{});
    Rng rng(31);
    std::vector<std::vector<Vector>> reps(sets.size());
    for (std::size_t f = 0; f < sets.size(); ++f) {
        const auto& x = sets[f].series.values;
        for (int i = 0; i < 40; ++i) {
            const auto s = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(x.rows() - 36)));
            reps[f].push_back(encode(p, normalize(x.col(0).segment(s, 36)).first));
        }
    }
    double within = 0, cross = 0;
    int nw = 0, nc = 0;
    for (std::size_t f = 0; f < reps.size(); ++f) {
        for (std::size_t g = 0; g < reps.size(); ++g) {
            for (std::size_t i = 0; i < reps[f].size(); ++i) {
                for (std::size_t j = 0; j < reps[g].size(); ++j) {
                    if (f == g && i == j) continue;
                    const double c = cosine(reps[f][i], reps[g][j]);
                    if (f == g) {
                        within += c;
                        ++nw;
                    } else {
                        cross += c;
                        ++nc;
                    }
                }
            }
        }
    }
    INFO("within " << within / nw << " cross " << cross / nc);
    CHECK(within / nw > cross / nc);
}

TEST_CASE("pca") {
    SUBCASE("points on a line") {
        const Vector dir = Vector::LinSpaced(5, 1, 5).normalized();
        std::vector<Representation> pts;
        const double coords[] = {-2, -0.5, 0, 1, 3.5};
        for (double c : coords) pts.push_back(c * dir + Vector::Constant(5, 0.7));
        const PcaResult r = pca_project(pts, 1);
        const double mean = (-2 - 0.5 + 0 + 1 + 3.5) / 5;
        for (int i = 0; i < 5; ++i) CHECK(std::abs(std::abs(r.projections(i, 0)) - std::abs(coords[i] - mean)) < 1e-9);
        CHECK(r.components(4, 0) > 0);
    }
    SUBCASE("duplicate points project to zero") {
        std::vector<Representation> pts(6, Vector::Constant(4, 2.0));
        const PcaResult r = pca_project(pts, 2);
        CHECK(r.projections.isZero(1e-12));
    }
    SUBCASE("explained variance matches a dense eigensolver") {
        Rng rng(12);
        for (int trial = 0; trial < 10; ++trial) {
            const Eigen::Index d = 4 + static_cast<Eigen::Index>(rng.below(4));
            Matrix scale = Matrix::Zero(d, d);
            for (Eigen::Index i = 0; i < d; ++i) scale(i, i) = std::pow(0.5, static_cast<double>(i)) * 4.0;
            const Matrix Q = random_orthogonal(d, rng);
            std::vector<Representation> pts;
            Matrix X(60, d);
            for (int i = 0; i < 60; ++i) {
                pts.push_back(Q * scale * random_matrix(d, 1, rng).col(0));
                X.row(i) = pts.back().transpose();
            }
            X.rowwise() -= X.colwise().mean();
            Eigen::SelfAdjointEigenSolver<Matrix> es(X.transpose() * X / 60.0);
            const PcaResult r = pca_project(pts, 3, trial);
            for (int k = 0; k < 3; ++k) CHECK(std::abs(r.explained_variance(k) - es.eigenvalues()(d - 1 - k)) < 1e-6);
            for (int k = 0; k < 3; ++k) {
                Eigen::Index arg = 0;
                r.components.col(k).cwiseAbs().maxCoeff(&arg);
                CHECK(r.components(arg, k) > 0);
            }
        }
    }
    SUBCASE("errors") {
        std::vector<Representation> pts(2, Vector::Ones(3));
        CHECK_THROWS(pca_project(pts, 2));
        CHECK_THROWS(pca_project(pts, 4));
    }
}

TEST_CASE("extractor files round trip") {
    Rng rng(2);
    ExtractorParams p = ExtractorParams::random(ExtractorDims{8, 5, 3}, rng);
    p.training_log.push_back(EpochLog{1, 0.5, 0.25, 2.0, 1.75});
    const std::string bytes = save_extractor(p);
    const ExtractorParams back = load_extractor(bytes);
    CHECK(bit_identical(back.weights, p.weights));
    CHECK(back.dims.window_len == 8);
    CHECK(back.training_log.size() == 1);
    CHECK(save_extractor(back) == bytes);
    CHECK_THROWS(load_extractor(bytes.substr(0, 40)));
    CHECK_THROWS(load_extractor("{}"));
}
