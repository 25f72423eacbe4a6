#include "icl/attention.hpp"

#include "icl/errors.hpp"

namespace icl {

AttentionParams AttentionParams::zeros(int d) {
    AttentionParams p;
    p.d = d;
    p.V11 = Mat::Zero(d, d);
    p.v12 = Vec::Zero(d);
    p.v21 = Vec::Zero(d);
    p.Q11 = Mat::Zero(d, d);
    p.q12 = Vec::Zero(d);
    p.q21 = Vec::Zero(d);
    return p;
}

void AttentionParams::check_dims() const {
    if (V11.rows() != d || V11.cols() != d || Q11.rows() != d || Q11.cols() != d || v12.size() != d ||
        v21.size() != d || q12.size() != d || q21.size() != d) {
        throw DimensionMismatch("attention parameter blocks do not match d=" + std::to_string(d));
    }
}

Mat AttentionParams::full_v() const {
    check_dims();
    Mat v = Mat::Zero(d + 2, d + 2);
    v.block(1, 1, d, d) = V11;
    v.block(1, d + 1, d, 1) = v12;
    v.block(d + 1, 1, 1, d) = v21.transpose();
    v(d + 1, d + 1) = v22;
    return v;
}

Mat AttentionParams::full_q() const {
    check_dims();
    Mat m = Mat::Zero(d + 2, d + 2);
    m(0, 0) = q;
    m.block(1, 1, d, d) = Q11;
    m.block(1, d + 1, d, 1) = q12;
    m.block(d + 1, 1, 1, d) = q21.transpose();
    m(d + 1, d + 1) = q22;
    return m;
}

AttentionParams AttentionParams::from_full(const Mat& v, const Mat& q) {
    if (v.rows() != v.cols() || q.rows() != q.cols() || v.rows() != q.rows() || v.rows() < 3) {
        throw DimensionMismatch("V and Q must be square, equal-sized and at least 3×3");
    }
    const int d = static_cast<int>(v.rows()) - 2;
    for (int k = 0; k < d + 2; ++k) {
        if (v(0, k) != 0.0 || v(k, 0) != 0.0) throw DimensionMismatch("V must have zero first row and column");
        if (k > 0 && (q(0, k) != 0.0 || q(k, 0) != 0.0)) {
            throw DimensionMismatch("Q must be zero in its first row and column except the corner");
        }
    }
    AttentionParams p;
    p.d = d;
    p.V11 = v.block(1, 1, d, d);
    p.v12 = v.block(1, d + 1, d, 1);
    p.v21 = v.block(d + 1, 1, 1, d).transpose();
    p.v22 = v(d + 1, d + 1);
    p.q = q(0, 0);
    p.Q11 = q.block(1, 1, d, d);
    p.q12 = q.block(1, d + 1, d, 1);
    p.q21 = q.block(d + 1, 1, 1, d).transpose();
    p.q22 = q(d + 1, d + 1);
    return p;
}

namespace {

// Visits every block in flatten() order as (pointer, length) spans.
template <class P, class F>
void for_each_block(P& p, F&& f) {
    f(p.V11.data(), p.d * p.d, true);
    f(p.v12.data(), p.d, false);
    f(p.v21.data(), p.d, false);
    f(&p.v22, 1, false);
    f(&p.q, 1, false);
    f(p.Q11.data(), p.d * p.d, true);
    f(p.q12.data(), p.d, false);
    f(p.q21.data(), p.d, false);
    f(&p.q22, 1, false);
}

}  // namespace

Vec AttentionParams::flatten() const {
    check_dims();
    Vec out(flat_size(d));
    int k = 0;
    for_each_block(*this, [&](const double* data, int len, bool is_matrix) {
        for (int i = 0; i < len; ++i) {
            // Matrices are column-major in Eigen; emit row-major.
            out(k++) = is_matrix ? data[(i % d) * d + i / d] : data[i];
        }
    });
    return out;
}

AttentionParams AttentionParams::unflatten(int d, const Vec& flat) {
    if (flat.size() != flat_size(d)) throw DimensionMismatch("flat parameter vector has wrong length");
    AttentionParams p = zeros(d);
    int k = 0;
    for_each_block(p, [&](double* data, int len, bool is_matrix) {
        for (int i = 0; i < len; ++i) {
            (is_matrix ? data[(i % d) * d + i / d] : data[i]) = flat(k++);
        }
    });
    return p;
}

RegimeMask RegimeMask::all() { return {true, true, true, true, true, true, true, true, true}; }

RegimeMask RegimeMask::value_only() {
    RegimeMask m;
    m.V11 = m.v12 = m.v21 = m.v22 = true;
    return m;
}

RegimeMask RegimeMask::qk_only() {
    RegimeMask m;
    m.q = m.Q11 = m.q12 = m.q21 = m.q22 = true;
    return m;
}

bool RegimeMask::any() const { return V11 || v12 || v21 || v22 || q || Q11 || q12 || q21 || q22; }

std::vector<char> RegimeMask::flat(int d) const {
    std::vector<char> out;
    out.reserve(AttentionParams::flat_size(d));
    auto push = [&](bool flag, int len) { out.insert(out.end(), len, flag ? 1 : 0); };
    push(V11, d * d);
    push(v12, d);
    push(v21, d);
    push(v22, 1);
    push(q, 1);
    push(Q11, d * d);
    push(q12, d);
    push(q21, d);
    push(q22, 1);
    return out;
}

Mat forward(const Mat& z, const AttentionParams& p) {
    if (z.rows() != p.d + 2 || z.cols() < 1) {
        throw DimensionMismatch("prompt matrix must have d+2 rows and at least one column");
    }
    const Mat v = p.full_v();
    const Mat q = p.full_q();
    return z + (v * z * z.transpose() * q * z) / static_cast<double>(z.cols());
}

double predict_zs(const Vec& x, const AttentionParams& p) {
    if (x.size() != p.d) throw DimensionMismatch("query length differs from d");
    return p.v21.dot(x) * (x.dot(p.Q11 * x) + p.q);
}

namespace {

// Σᵢ (v21ᵀxᵢ + v22 yᵢ)(q + xᵢᵀQ11x + yᵢ q21ᵀx) over the context.
double context_sum(const Prompt& pr, const AttentionParams& p) {
    const Vec g = p.Q11 * pr.query_x;
    const double h = p.q21.dot(pr.query_x);
    const Vec a = pr.context_x.transpose() * p.v21 + p.v22 * pr.context_y;
    const Vec b = (pr.context_x.transpose() * g + h * pr.context_y).array() + p.q;
    return a.dot(b);
}

void check_prompt(const Prompt& pr, const AttentionParams& p) {
    if (pr.dim() != p.d) throw DimensionMismatch("prompt dimension differs from d");
    if (pr.n() < 1) throw EmptyContext("few-shot prediction needs n ≥ 1; use predict_zs");
}

}  // namespace

double predict_fs(const Prompt& prompt, const AttentionParams& p) {
    check_prompt(prompt, p);
    const double n = prompt.n();
    return (context_sum(prompt, p) + predict_zs(prompt.query_x, p)) / (n + 1.0);
}

double predict_netfs(const Prompt& prompt, const AttentionParams& p) {
    check_prompt(prompt, p);
    return context_sum(prompt, p) / static_cast<double>(prompt.n());
}

double predict_fs_via_forward(const Prompt& prompt, const AttentionParams& p) {
    check_prompt(prompt, p);
    const Mat out = forward(prompt_matrix(prompt), p);
    return out(p.d + 1, prompt.n());
}

double predict_zs_via_forward(const Vec& x, const AttentionParams& p) {
    Prompt pr;
    pr.context_x.resize(p.d, 0);
    pr.context_y.resize(0);
    pr.query_x = x;
    const Mat out = forward(prompt_matrix(pr), p);
    return out(p.d + 1, 0);
}

namespace {

nlohmann::json mat_json(const Mat& m) {
    std::vector<double> flat;
    flat.reserve(m.size());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) flat.push_back(m(i, j));
    return flat;
}

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Mat mat_from(const nlohmann::json& j, int d, const char* key) {
    const auto flat = j.at(key).get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != d * d) throw DimensionMismatch(std::string(key) + " must have d² entries");
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) m(i, k) = flat[i * d + k];
    return m;
}

Vec vec_from(const nlohmann::json& j, int d, const char* key) {
    const auto flat = j.at(key).get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != d) throw DimensionMismatch(std::string(key) + " must have d entries");
    return Eigen::Map<const Vec>(flat.data(), d);
}

}  // namespace

nlohmann::json params_to_json(const AttentionParams& p) {
    p.check_dims();
    return {{"d", p.d},           {"V11", mat_json(p.V11)}, {"v12", vec_json(p.v12)}, {"v21", vec_json(p.v21)},
            {"v22", p.v22},       {"q", p.q},               {"Q11", mat_json(p.Q11)}, {"q12", vec_json(p.q12)},
            {"q21", vec_json(p.q21)}, {"q22", p.q22}};
}

AttentionParams params_from_json(const nlohmann::json& j) {
    static const char* kKeys[] = {"d", "V11", "v12", "v21", "v22", "q", "Q11", "q12", "q21", "q22"};
    if (!j.is_object() || j.size() != std::size(kKeys)) {
        throw InvalidConfig("parameter snapshot must be an object with exactly 10 keys");
    }
    for (const char* k : kKeys)
        if (!j.contains(k)) throw InvalidConfig(std::string("parameter snapshot is missing key ") + k);
    AttentionParams p;
    p.d = j.at("d").get<int>();
    if (p.d < 1) throw InvalidConfig("d must be positive");
    p.V11 = mat_from(j, p.d, "V11");
    p.v12 = vec_from(j, p.d, "v12");
    p.v21 = vec_from(j, p.d, "v21");
    p.v22 = j.at("v22").get<double>();
    p.q = j.at("q").get<double>();
    p.Q11 = mat_from(j, p.d, "Q11");
    p.q12 = vec_from(j, p.d, "q12");
    p.q21 = vec_from(j, p.d, "q21");
    p.q22 = j.at("q22").get<double>();
    return p;
}

}  // namespace icl
