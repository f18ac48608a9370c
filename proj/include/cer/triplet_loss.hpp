#pragma once

// Triplet margin loss over projected embeddings and its analytic gradient
// with respect to the projection matrix.
//
//   L = max(0, d(Wa, Wp) - d(Wa, Wn) + m)
//
// with d = 1 - cos (cosine) or ||.||_2 (euclidean).

#include <cmath>
#include <vector>

#include "cer/embedding.hpp"
#include "cer/error.hpp"
#include "cer/projection.hpp"

namespace cer {

struct LossTerms {
    double d_pos = 0.0;  // d(f(a), f(p))
    double d_neg = 0.0;  // d(f(a), f(n))
    double inner = 0.0;  // d_pos - d_neg + margin
    double loss = 0.0;   // max(0, inner)
};

namespace detail {

inline double projected_distance(Metric metric, const EmbeddingVector& u, const EmbeddingVector& v) {
    if (metric == Metric::cosine) {
        const double nu = norm(u.span());
        const double nv = norm(v.span());
        if (nu < kDegenerateNorm || nv < kDegenerateNorm) throw NumericError("degenerate projection");
        return 1.0 - dot(u.span(), v.span()) / (nu * nv);
    }
    return euclidean_distance(u.span(), v.span());
}

/// Gradients of d(u, v) with respect to u and v, written into gu and gv.
inline void distance_gradient(Metric metric, const EmbeddingVector& u, const EmbeddingVector& v,
                              std::vector<double>& gu, std::vector<double>& gv) {
    const std::size_t n = u.dim();
    gu.assign(n, 0.0);
    gv.assign(n, 0.0);
    if (metric == Metric::cosine) {
        // d = 1 - u.v / (|u||v|);  dd/du = -(v/(|u||v|) - cos * u/|u|^2)
        const double nu = norm(u.span());
        const double nv = norm(v.span());
        const double c = dot(u.span(), v.span()) / (nu * nv);
        const double inv = 1.0 / (nu * nv);
        for (std::size_t i = 0; i < n; ++i) {
            gu[i] = -(v[i] * inv - c * u[i] / (nu * nu));
            gv[i] = -(u[i] * inv - c * v[i] / (nv * nv));
        }
        return;
    }
    const double d = euclidean_distance(u.span(), v.span());
    if (d < kDegenerateNorm) return;  // subgradient 0 at the singularity
    for (std::size_t i = 0; i < n; ++i) {
        gu[i] = (u[i] - v[i]) / d;
        gv[i] = -gu[i];
    }
}

inline void check_dims(const ProjectionHead& head, const EmbeddingVector& a, const EmbeddingVector& p,
                       const EmbeddingVector& n) {
    if (a.dim() != head.d_in || p.dim() != head.d_in || n.dim() != head.d_in)
        throw ConfigError("triplet vectors must have dim " + std::to_string(head.d_in));
}

}  // namespace detail

inline LossTerms triplet_loss_terms(const ProjectionHead& head, const EmbeddingVector& anchor,
                                    const EmbeddingVector& pos, const EmbeddingVector& neg, Metric metric,
                                    double margin) {
    detail::check_dims(head, anchor, pos, neg);
    const auto fa = project(head, anchor);
    const auto fp = project(head, pos);
    const auto fn = project(head, neg);
    LossTerms t;
    t.d_pos = detail::projected_distance(metric, fa, fp);
    t.d_neg = detail::projected_distance(metric, fa, fn);
    t.inner = t.d_pos - t.d_neg + margin;
    t.loss = std::max(0.0, t.inner);
    return t;
}

inline double triplet_loss(const ProjectionHead& head, const EmbeddingVector& anchor, const EmbeddingVector& pos,
                           const EmbeddingVector& neg, Metric metric, double margin) {
    return triplet_loss_terms(head, anchor, pos, neg, metric, margin).loss;
}

/// dL/dW as a d_out x d_in row-major matrix. Zero when the hinge is inactive
/// (inner <= 0).
inline std::vector<double> loss_gradient(const ProjectionHead& head, const EmbeddingVector& anchor,
                                         const EmbeddingVector& pos, const EmbeddingVector& neg, Metric metric,
                                         double margin, LossTerms* terms_out = nullptr) {
    detail::check_dims(head, anchor, pos, neg);
    std::vector<double> grad(head.d_out * head.d_in, 0.0);
    const auto fa = project(head, anchor);
    const auto fp = project(head, pos);
    const auto fn = project(head, neg);
    LossTerms t;
    t.d_pos = detail::projected_distance(metric, fa, fp);
    t.d_neg = detail::projected_distance(metric, fa, fn);
    t.inner = t.d_pos - t.d_neg + margin;
    t.loss = std::max(0.0, t.inner);
    if (terms_out) *terms_out = t;
    if (t.inner <= 0.0) return grad;

    std::vector<double> ga_pos, gp, ga_neg, gn;
    detail::distance_gradient(metric, fa, fp, ga_pos, gp);
    detail::distance_gradient(metric, fa, fn, ga_neg, gn);

    // dL/df(a) = dd_pos/du - dd_neg/du;  dL/df(p) = dd_pos/dv;  dL/df(n) = -dd_neg/dv
    for (std::size_t r = 0; r < head.d_out; ++r) {
        const double ga = ga_pos[r] - ga_neg[r];
        const double gpr = gp[r];
        const double gnr = -gn[r];
        double* row = grad.data() + r * head.d_in;
        for (std::size_t c = 0; c < head.d_in; ++c) row[c] = ga * anchor[c] + gpr * pos[c] + gnr * neg[c];
    }
    return grad;
}

}  // namespace cer
