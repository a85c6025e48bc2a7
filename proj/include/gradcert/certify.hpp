/*
 * Copyright 2026 The gradcert authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GRADCERT_CERTIFY_HPP
#define GRADCERT_CERTIFY_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "gradcert/bounds.hpp"
#include "gradcert/tensor.hpp"

namespace gradcert {

enum class Similarity { MSE, Cosine };

/// Adversary's goal: an explanation within tau of v_targ (targeted) or
/// further than tau from the clean explanation (untargeted).
struct TargetSpec {
    Tensor v_targ;
    double tau = 0.0;
    Similarity similarity = Similarity::MSE;
};

enum class CertMode { Targeted, Untargeted, TopK, Prediction };

inline const char* cert_mode_name(CertMode m) {
    switch (m) {
        case CertMode::Targeted: return "targeted";
        case CertMode::Untargeted: return "untargeted";
        case CertMode::TopK: return "topk";
        case CertMode::Prediction: return "prediction";
    }
    return "?";
}

/// Verdict plus the witness explanation that extremizes the similarity over
/// the box. A false verdict means "unknown", never "attack exists".
struct CertificationOutcome {
    bool certified = false;
    Tensor witness;
    double score = 0.0; // extremal similarity value over the box
    CertMode mode = CertMode::Targeted;
};

/// Mean squared error: squared Euclidean distance divided by the dimension.
/// All tau thresholds in this library are interpreted under this 1/n
/// convention, which keeps them resolution independent.
inline double mse(const Tensor& v, const Tensor& w) {
    require_same_shape(v, w, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - w[i];
        s += d * d;
    }
    return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Targeted certificates
// ---------------------------------------------------------------------------

/// The box point closest to v_targ in MSE: the elementwise clamp of v_targ
/// into [v_lower, v_upper].
inline Tensor targeted_witness(const GradientBox& box, const Tensor& v_targ) {
    Tensor t = v_targ.reshaped(box.v_lower.shape());
    return emin(emax(t, box.v_lower), box.v_upper);
}

/// Certified iff even the closest reachable explanation stays further than
/// tau from the target.
inline CertificationOutcome certify_targeted(const GradientBox& box, const TargetSpec& spec) {
    if (spec.similarity != Similarity::MSE)
        throw ContractError("certify_targeted: only the MSE similarity is supported");
    CertificationOutcome out;
    out.mode = CertMode::Targeted;
    out.witness = targeted_witness(box, spec.v_targ);
    out.score = mse(out.witness, spec.v_targ.reshaped(out.witness.shape()));
    out.certified = out.score > spec.tau;
    return out;
}

// ---------------------------------------------------------------------------
// Untargeted certificates
// ---------------------------------------------------------------------------

/// The box point farthest from v in MSE: per coordinate the farther endpoint
/// (ties toward the upper end).
inline Tensor untargeted_witness(const GradientBox& box, const Tensor& v) {
    Tensor c = v.reshaped(box.v_lower.shape());
    Tensor w(c.shape());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double up = std::fabs(box.v_upper[i] - c[i]);
        const double dn = std::fabs(c[i] - box.v_lower[i]);
        w[i] = (up >= dn) ? box.v_upper[i] : box.v_lower[i];
    }
    return w;
}

/// Certified iff even the farthest reachable explanation stays within tau of
/// the clean one. norm_ratio = |v_cert| / |v| is reported alongside for the
/// norm-ratio robustness plots.
inline CertificationOutcome certify_untargeted(const GradientBox& box, const Tensor& v,
                                               double tau) {
    CertificationOutcome out;
    out.mode = CertMode::Untargeted;
    out.witness = untargeted_witness(box, v);
    out.score = mse(v.reshaped(out.witness.shape()), out.witness);
    out.certified = out.score <= tau;
    return out;
}

inline double untargeted_norm_ratio(const GradientBox& box, const Tensor& v) {
    const double vn = norm2(v);
    if (vn == 0.0) return std::numeric_limits<double>::infinity();
    return norm2(untargeted_witness(box, v)) / vn;
}

// ---------------------------------------------------------------------------
// Cosine similarity certificate
// ---------------------------------------------------------------------------

/// Sound lower bound on min_{v' in box} cos(v', v_targ).
///
/// The numerator is bounded below by summing per-coordinate endpoint minima.
/// A positive numerator bound must be divided by the largest reachable norm;
/// a negative one by the smallest (an unconditional smallest-denominator
/// rule would be unsound for positive numerators). Returns -1 when the box
/// admits arbitrarily small norms under a negative numerator.
inline double cosine_similarity_min_bound(const GradientBox& box, const Tensor& v_targ) {
    const double tn = norm2(v_targ);
    if (tn == 0.0) throw ContractError("cosine bound: target vector must be nonzero");
    Tensor t = v_targ.reshaped(box.v_lower.shape());

    double num_min = 0.0, max_norm_sq = 0.0, min_norm_sq = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        num_min += std::min(box.v_lower[i] * t[i], box.v_upper[i] * t[i]);
        const double lo = box.v_lower[i], hi = box.v_upper[i];
        const double big = std::max(std::fabs(lo), std::fabs(hi));
        const double small = (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::fabs(lo), std::fabs(hi));
        max_norm_sq += big * big;
        min_norm_sq += small * small;
    }
    double bound;
    if (num_min >= 0.0) {
        bound = (max_norm_sq == 0.0) ? 0.0 : num_min / (std::sqrt(max_norm_sq) * tn);
    } else {
        if (min_norm_sq == 0.0) return -1.0;
        bound = num_min / (std::sqrt(min_norm_sq) * tn);
    }
    return std::clamp(bound, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Feature-ranking certificates and bias statistics
// ---------------------------------------------------------------------------

/// True iff no explanation inside the box ranks feature j among the top k by
/// magnitude: at least k other features have a guaranteed-minimum magnitude
/// exceeding feature j's maximum magnitude.
inline bool certified_top_k_exclusion(const GradientBox& box, std::size_t j, std::size_t k) {
    const std::size_t n = box.v_lower.size();
    if (j >= n) throw ContractError("top-k exclusion: feature index out of range");
    if (k >= n) throw ContractError("top-k exclusion: k out of range");
    const double max_j = std::max(std::fabs(box.v_lower[j]), std::fabs(box.v_upper[j]));
    std::size_t beat = 0;
    for (std::size_t i = 0; i < n && beat < k; ++i) {
        if (i == j) continue;
        const double lo = box.v_lower[i], hi = box.v_upper[i];
        const double min_i =
            (lo <= 0.0 && hi >= 0.0) ? 0.0 : std::min(std::fabs(lo), std::fabs(hi));
        if (min_i > max_j) ++beat;
    }
    return beat >= k;
}

/// "Explanation detected bias": the share of total gradient magnitude on the
/// sensitive feature, |v_j| / sum_i |v_i| in [0,1]; 0 for an all-zero v.
inline double bias_score(const Tensor& v, std::size_t j) {
    if (j >= v.size()) throw ContractError("bias_score: feature index out of range");
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) total += std::fabs(v[i]);
    if (total == 0.0) return 0.0;
    return std::fabs(v[j]) / total;
}

// ---------------------------------------------------------------------------
// Corner-mask attack targets: a k x k block of ones placed in each image
// corner at several inset offsets, normalized to unit l2 norm. The scaling
// convention is recorded in every report that uses them.
// ---------------------------------------------------------------------------

inline std::vector<Tensor> corner_mask_targets(std::size_t h, std::size_t w,
                                               std::size_t block = 5, std::size_t insets = 5,
                                               std::size_t channels = 1) {
    if (block + insets > h || block + insets > w)
        throw ContractError("corner masks do not fit the image");
    std::vector<Tensor> out;
    out.reserve(4 * insets);
    for (int corner = 0; corner < 4; ++corner)
        for (std::size_t o = 0; o < insets; ++o) {
            Tensor m({channels * h * w, 1});
            const std::size_t r0 = (corner / 2 == 0) ? o : h - block - o;
            const std::size_t c0 = (corner % 2 == 0) ? o : w - block - o;
            const double val = 1.0 / std::sqrt(static_cast<double>(channels * block * block));
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t r = 0; r < block; ++r)
                    for (std::size_t q = 0; q < block; ++q)
                        m[(c * h + r0 + r) * w + c0 + q] = val;
            out.push_back(std::move(m));
        }
    return out;
}

} // namespace gradcert

#endif // GRADCERT_CERTIFY_HPP
