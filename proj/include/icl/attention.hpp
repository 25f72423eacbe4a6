#pragma once

#include <string>

#include <json.hpp>

#include "icl/linalg.hpp"
#include "icl/taskgen.hpp"

namespace icl {

// Block parameterization of the linear attention layer
//   f(Z) = Z + (1/ncol(Z)) · V Z Zᵀ Q Z
// where V = [[0, 0, 0], [0, V11, v12], [0, v21ᵀ, v22]] and
//       Q = [[q, 0, 0], [0, Q11, q12], [0, q21ᵀ, q22]].
// Storing blocks (not full matrices) makes the structural zeros
// unrepresentable.
struct AttentionParams {
    int d = 0;
    Mat V11;
    Vec v12;
    Vec v21;
    double v22 = 0.0;
    double q = 0.0;
    Mat Q11;
    Vec q12;
    Vec q21;
    double q22 = 0.0;

    static AttentionParams zeros(int d);

    // Full (d+2)×(d+2) matrices assembled from the blocks.
    Mat full_v() const;
    Mat full_q() const;
    // Splits full matrices back into blocks. Throws DimensionMismatch if a
    // structural zero is violated.
    static AttentionParams from_full(const Mat& v, const Mat& q);

    // Flat list of all block entries in a fixed order (V11, v12, v21, v22, q,
    // Q11, q12, q21, q22; matrices row-major). Used for gradient checks and
    // optimizer updates.
    Vec flatten() const;
    static AttentionParams unflatten(int d, const Vec& flat);
    static int flat_size(int d) { return 2 * d * d + 4 * d + 3; }

    void check_dims() const;
};

// Which blocks a training regime may update.
struct RegimeMask {
    bool V11 = false, v12 = false, v21 = false, v22 = false;
    bool q = false, Q11 = false, q12 = false, q21 = false, q22 = false;

    static RegimeMask all();
    static RegimeMask value_only();
    static RegimeMask qk_only();
    bool any() const;
    // Per-entry flags aligned with AttentionParams::flatten().
    std::vector<char> flat(int d) const;
};

// Full matrix forward pass; the cross-check path for the block formulas.
Mat forward(const Mat& z, const AttentionParams& p);

// ŷ_FS: bottom-right entry of the forward pass on the n-shot prompt (n ≥ 1).
double predict_fs(const Prompt& prompt, const AttentionParams& p);
// ŷ_ZS = v21ᵀx · (xᵀQ11x + q), the prediction from the query alone.
double predict_zs(const Vec& x, const AttentionParams& p);
// ŷ_Net-FS = (1/n) Σᵢ (v21ᵀxᵢ + v22 yᵢ)(q + xᵢᵀQ11x + yᵢ q21ᵀx), the
// context-only part, so that ŷ_FS = n/(n+1)·ŷ_Net-FS + 1/(n+1)·ŷ_ZS.
double predict_netfs(const Prompt& prompt, const AttentionParams& p);

// Same predictions evaluated through the full-matrix forward pass.
double predict_fs_via_forward(const Prompt& prompt, const AttentionParams& p);
double predict_zs_via_forward(const Vec& x, const AttentionParams& p);

// JSON snapshot with keys {d, V11, v12, v21, v22, q, Q11, q12, q21, q22};
// matrices are row-major flat arrays.
nlohmann::json params_to_json(const AttentionParams& p);
AttentionParams params_from_json(const nlohmann::json& j);

}  // namespace icl
