#include "icl/theory.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"

namespace icl {

namespace {

void require_same_dim(const Mat& a, const Mat& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionMismatch(what);
}

}  // namespace

// ---------------------------------------------------------------- moments --

Mat wishart_quadratic_mean(const SymMatrix& sigma, double n, const SymMatrix& a) {
    const Mat& s = sigma.mat();
    require_same_dim(s, a.mat(), "wishart_quadratic_mean: Σ and A differ in size");
    return n * trace_prod(a.mat(), s) * s + n * (n + 1.0) * s * a.mat() * s;
}

double gaussian_quartic_mean(const SymMatrix& sigma, const SymMatrix& a, const SymMatrix& b) {
    const Mat& s = sigma.mat();
    require_same_dim(s, a.mat(), "gaussian_quartic_mean: Σ and A differ in size");
    require_same_dim(s, b.mat(), "gaussian_quartic_mean: Σ and B differ in size");
    const Mat as = a.mat() * s;
    const Mat bs = b.mat() * s;
    return as.trace() * bs.trace() + 2.0 * trace_prod(as, bs);
}

double gaussian_sextic_scalar(const SymMatrix& sigma, const SymMatrix& a, const SymMatrix& b,
                              const SymMatrix& c) {
    const Mat& s = sigma.mat();
    require_same_dim(s, a.mat(), "gaussian_sextic_scalar: Σ and A differ in size");
    require_same_dim(s, b.mat(), "gaussian_sextic_scalar: Σ and B differ in size");
    require_same_dim(s, c.mat(), "gaussian_sextic_scalar: Σ and C differ in size");
    const Mat as = a.mat() * s;
    const Mat bs = b.mat() * s;
    const Mat cs = c.mat() * s;
    const double ta = as.trace(), tb = bs.trace(), tc = cs.trace();
    return ta * tb * tc + 2.0 * ta * trace_prod(bs, cs) + 2.0 * tb * trace_prod(as, cs) +
           2.0 * tc * trace_prod(as, bs) + 8.0 * trace_prod(as * bs, cs);
}

Mat gaussian_sextic_matrix(const SymMatrix& sigma, const Mat& a, const Mat& b) {
    const Mat& s = sigma.mat();
    require_same_dim(s, a, "gaussian_sextic_matrix: Σ and A differ in size");
    require_same_dim(s, b, "gaussian_sextic_matrix: Σ and B differ in size");
    const double ta = trace_prod(a, s);
    const double tb = trace_prod(b, s);
    const Mat as = a * s;
    const Mat sas = s * (a + a.transpose()) * s;
    const Mat sbs = s * (b + b.transpose()) * s;
    const double pair = trace_prod(as, b * s) + trace_prod(as, b.transpose() * s);
    return (ta * tb + pair) * s + ta * sbs + tb * sas + sas * (b + b.transpose()) * s +
           sbs * (a + a.transpose()) * s;
}

Mat gaussian_sextic_matrix_transpose_pair(const SymMatrix& sigma, const Mat& a) {
    const Mat& s = sigma.mat();
    require_same_dim(s, a, "gaussian_sextic_matrix_transpose_pair: Σ and A differ in size");
    const double ta = trace_prod(a, s);
    const Mat as = a * s;
    const Mat sym = a + a.transpose();
    return (ta * ta + trace_prod(as, a.transpose() * s) + trace_prod(as, as)) * s + 2.0 * ta * s * sym * s +
           2.0 * s * sym * s * sym * s;
}

// ------------------------------------------------------------------ errors --

Mat JointCov::full() const {
    const int d = static_cast<int>(sigma.rows());
    Mat j(d + 1, d + 1);
    j.topLeftCorner(d, d) = sigma;
    j.topRightCorner(d, 1) = sigma_theta;
    j.bottomLeftCorner(1, d) = sigma_theta.transpose();
    j(d, d) = yy;
    return j;
}

JointCov joint_cov(const TaskSpec& task) {
    const Mat& s = task.cov();
    JointCov j;
    j.sigma = s;
    j.sigma_theta = s * task.theta;
    j.yy = task.theta.dot(j.sigma_theta) + task.noise_var;
    return j;
}

namespace {

void check_params_task(const AttentionParams& p, const TaskSpec& task) {
    p.check_dims();
    if (p.d != task.dim()) throw DimensionMismatch("parameters and task have different d");
}

}  // namespace

MomentReport prediction_moments(const AttentionParams& p, const TaskSpec& task, double n) {
    check_params_task(p, task);
    if (!(n >= 1.0)) throw InvalidConfig("prediction_moments needs n ≥ 1");
    const int d = p.d;
    const Mat& s = task.cov();
    const Vec& theta = task.theta;
    const Mat j = joint_cov(task).full();

    // Net-FS = vᵀ S M x + q·vᵀ m̄ with S, m̄ the context second moment and mean.
    Mat m(d + 1, d);
    m.topRows(d) = p.Q11;
    m.row(d) = p.q21.transpose();
    Vec v(d + 1);
    v.head(d) = p.v21;
    v(d) = p.v22;

    const Mat& q11 = p.Q11;
    const double q = p.q;
    const double tq = trace_prod(q11, s);
    const Mat sqs = s * q11 * s;
    const Mat qsym = q11 + q11.transpose();
    const Vec sv21 = s * p.v21;
    const double a = p.v21.dot(sv21);

    const Vec jv = j * v;
    const double vjv = v.dot(jv);
    const Mat msm = m * s * m.transpose();
    const Vec mt_jv = m.transpose() * jv;  // Mᵀ Σ_joint v

    MomentReport r;
    r.var_y = theta.dot(s * theta) + task.noise_var;
    r.var_netfs = trace_prod(msm, j) / n * vjv + (n + 1.0) / n * jv.dot(msm * jv) + q * q / n * vjv;
    r.var_zs = (tq * tq + trace_prod(q11 * s, q11.transpose() * s) + trace_prod(q11 * s, q11 * s)) * a +
               4.0 * tq * p.v21.dot(sqs * p.v21) + 2.0 * sv21.dot(qsym * s * qsym * sv21) + 2.0 * q * tq * a +
               4.0 * q * p.v21.dot(sqs * p.v21) + q * q * a;
    // E[x xᵀ(xᵀQx + q)] applied to v21 gives (Σ(Q+Qᵀ)Σ + (tr(QΣ) + q)Σ) v21.
    const Vec zs_dir = s * qsym * sv21 + (tq + q) * sv21;
    r.cov_netfs_zs = mt_jv.dot(zs_dir);
    r.cov_netfs_y = mt_jv.dot(s * theta);
    r.cov_zs_y = zs_dir.dot(theta);
    return r;
}

double zs_error(const AttentionParams& p, const TaskSpec& task) {
    check_params_task(p, task);
    const MomentReport r = prediction_moments(p, task, 1.0);
    return r.var_zs - 2.0 * r.cov_zs_y + r.var_y;
}

double fs_error(const AttentionParams& p, const TaskSpec& task, double n) {
    const MomentReport r = prediction_moments(p, task, n);
    const double e_net = r.var_netfs - 2.0 * r.cov_netfs_y + r.var_y;
    const double e_zs = r.var_zs - 2.0 * r.cov_zs_y + r.var_y;
    const double e_cross = r.cov_netfs_zs - r.cov_netfs_y - r.cov_zs_y + r.var_y;
    const double n1 = n + 1.0;
    return (n * n * e_net + e_zs + 2.0 * n * e_cross) / (n1 * n1);
}

double fs_error_limit(const AttentionParams& p, const TaskSpec& task) {
    check_params_task(p, task);
    const int d = p.d;
    const Mat j = joint_cov(task).full();
    Vec v(d + 1);
    v.head(d) = p.v21;
    v(d) = p.v22;
    const Vec jv = j * v;
    const Vec r = p.Q11.transpose() * jv.head(d) + p.q21 * jv(d) - task.theta;
    return r.dot(task.cov() * r) + task.noise_var;
}

double fixq_fs_error(const Vec& v21, double v22, const TaskSpec& task, double n) {
    if (v21.size() != task.dim()) throw DimensionMismatch("fixq_fs_error: v21 has wrong length");
    const double d = task.dim();
    const Mat& s = task.cov();
    const Vec st = s * task.theta;
    const double a = v21.dot(s * v21);
    const double b = v21.dot(st);
    const double c = task.theta.dot(st);
    const double s2 = task.noise_var;
    const double n1 = n + 1.0;
    const double ca = (d + 2.0) * (d + 4.0) + n * (n + 5.0 + 3.0 * d);
    const double cb = 2.0 * (-(d + 2.0) + n * (n + 3.0 + 2.0 * d) * v22 - n * (n + 3.0 + d));
    const double cc = n * (n + 1.0 + d) * v22 * v22 - 2.0 * n * n1 * v22 + n1 * n1;
    const double cs = n * d * v22 * v22 + n1 * n1;
    return (ca * a + cb * b + cc * c + cs * s2) / (n1 * n1);
}

double fixq_fs_error_limit(const Vec& v21, double v22, const TaskSpec& task) {
    if (v21.size() != task.dim()) throw DimensionMismatch("fixq_fs_error_limit: v21 has wrong length");
    const Vec r = v21 + (v22 - 1.0) * task.theta;
    return r.dot(task.cov() * r) + task.noise_var;
}

// ------------------------------------------------------- optimal parameters --

AttentionParams optimal_pretrain(double m, const EigenDecomp& sigma, bool limit) {
    if (!limit && !(m >= 1.0)) throw InvalidConfig("pretraining context length must be ≥ 1");
    const int d = sigma.dim();
    AttentionParams p = AttentionParams::zeros(d);
    const double tr = sigma.trace();
    Vec diag(d);
    for (int i = 0; i < d; ++i) {
        const double lam = sigma.eigenvalues(i);
        diag(i) = limit ? 1.0 / lam : (m + 1.0 + d) / ((m + 1.0) * lam + tr);
    }
    p.Q11 = SymMatrix::from_upper(sigma.rotation * diag.asDiagonal() * sigma.rotation.transpose()).mat();
    p.v22 = limit ? 1.0 : m / (m + 1.0 + d);
    return p;
}

AttentionParams optimal_full_ft(const Vec& theta0, double w) {
    if (!(w > 0.0)) throw NonPositiveW("full fine-tuning family needs w > 0");
    AttentionParams p = AttentionParams::zeros(static_cast<int>(theta0.size()));
    p.v21 = w * theta0;
    p.v22 = 1.0;
    p.q = 1.0 / w;
    return p;
}

AttentionParams optimal_value_ft(const Vec& theta0, double w, const EigenDecomp& sigma) {
    if (w == 0.0) throw ZeroW("value fine-tuning family needs w ≠ 0");
    const int d = static_cast<int>(theta0.size());
    if (sigma.dim() != d) throw DimensionMismatch("θ₀ and Σ differ in size");
    AttentionParams p = AttentionParams::zeros(d);
    p.v21 = theta0 / (d + 4.0);
    p.v22 = w;
    p.Q11 = spd_inverse(sigma.matrix()).mat();
    return p;
}

double w_star_task(double n, const Vec& theta, const Vec& theta0, const TaskSpec& task) {
    const double d = task.dim();
    const Mat& s = task.cov();
    const double c = theta.dot(s * theta);
    const double cross = theta0.dot(s * theta);
    return ((n + 1.0) * c - (n + 3.0 + 2.0 * d) / (d + 4.0) * cross) / ((n + 1.0 + d) * c + d * task.noise_var);
}

double w_star_avg(double n, const TaskSpec& task) {
    const double d = task.dim();
    const double tr = task.sigma.trace();
    return (n + 1.0) * tr / ((n + 1.0 + d) * tr + d * task.noise_var);
}

double excess_error(double n, const Vec& theta, const Vec& theta0, const TaskSpec& task) {
    const double d = task.dim();
    const double c = theta.dot(task.cov() * theta);
    const double dw = w_star_task(n, theta0, theta0, task) - w_star_task(n, theta, theta0, task);
    return n * ((n + 1.0 + d) * c + d * task.noise_var) / ((n + 1.0) * (n + 1.0)) * dw * dw;
}

double excess_error_cosine(double n, double rho, double c, double noise_var, int d) {
    const double k = n + 3.0 + 2.0 * d;
    const double n1 = n + 1.0;
    const double d4 = d + 4.0;
    return n * k * k * c * c / (n1 * n1 * d4 * d4 * ((n + 1.0 + d) * c + d * noise_var)) * (1.0 - rho) * (1.0 - rho);
}

// --------------------------------------------------------------- condition --

ConditionTriple zs_vs_fs_condition(const AttentionParams& p, const TaskSpec& task, double n) {
    check_params_task(p, task);
    if (p.v22 != 1.0) throw HypothesisViolated("condition requires v22 = 1");
    if (!p.q21.isZero(0.0)) throw HypothesisViolated("condition requires q21 = 0");
    SymMatrix qm;
    try {
        qm = SymMatrix(p.Q11);
    } catch (const NotSymmetric&) {
        throw HypothesisViolated("condition requires a symmetric Q11");
    }
    if (sym_eigen(qm).eigenvalues.minCoeff() <= 0.0) throw HypothesisViolated("condition requires Q11 ≻ 0");

    const Mat& s = task.cov();
    const Mat& q11 = p.Q11;
    const double q = p.q;
    const Mat sqs = s * q11 * s;
    const Mat sqsqs = sqs * q11 * s;
    const double tq = trace_prod(q11, s);
    const double t2 = trace_prod(q11 * s, q11 * s);

    const Mat a = (n + 2) * tq * tq * s + (2 * n + 3) * t2 * s + (4 * n + 6) * tq * sqs + (7 * n + 11) * sqsqs +
                  q * ((n + 1) * q * s + 2 * (n + 2) * tq * s + (4 * n + 6) * sqs);
    const Mat b = t2 * s + (n + 3) * sqsqs + tq * sqs + (n + 1) * sqs + (n + 1) * tq * s + q * (sqs + (q - 1) * s) +
                  (n + 2) * q * s;
    const Mat c = (n + 1) * sqsqs - 2 * (n + 1) * sqs + t2 * s + q * q * s;

    ConditionTriple out{SymMatrix::from_upper(a), SymMatrix::from_upper(b), SymMatrix::from_upper(c), 0.0, 0.0,
                        false};
    if (sym_eigen(out.A).eigenvalues.minCoeff() < 1e-10) throw HypothesisViolated("A is numerically singular");
    const Mat a_inv = spd_inverse(out.A).mat();
    const Vec b_theta = out.B.mat() * task.theta;
    const Vec center = a_inv * b_theta;
    const Vec r = p.v21 - center;
    out.c = b_theta.dot(center) + task.theta.dot(out.C.mat() * task.theta) + (t2 + q * q) * task.noise_var;
    out.lhs = r.dot(out.A.mat() * r);
    out.zs_not_worse = out.lhs <= out.c;
    return out;
}

double pretrain_threshold(double m, const TaskSpec& task, bool limit) {
    const Vec& lam = task.sigma.eigenvalues;
    const double tr = lam.sum();
    const double signal = lam(0) * task.theta.squaredNorm();
    if (signal == 0.0) throw ZeroSignal("λ₁‖θ‖² is zero");
    Vec a(lam.size());
    for (Eigen::Index i = 0; i < lam.size(); ++i) a(i) = limit ? 1.0 : m * lam(i) / ((m + 1.0) * lam(i) + tr);
    const double ad = a(a.size() - 1);  // smallest eigenvalue gives the smallest aᵢ
    return a.squaredNorm() * (signal + task.noise_var) / (ad * (2.0 - ad) * signal) - 1.0;
}

double error_crossing(const AttentionParams& p, const TaskSpec& task, double lo, double hi) {
    const double zs = zs_error(p, task);
    auto f = [&](double n) { return fs_error(p, task, n) - zs; };
    double flo = f(lo);
    const double fhi = f(hi);
    if ((flo > 0) == (fhi > 0)) throw InvalidConfig("error_crossing: interval does not bracket a sign change");
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if ((fm > 0) == (flo > 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------- dynamics --

AttentionParams abg_params(double alpha, double beta, double gamma, const Vec& theta0) {
    const int d = static_cast<int>(theta0.size());
    AttentionParams p = AttentionParams::zeros(d);
    p.v21 = alpha * theta0;
    p.v22 = 1.0;
    p.q = beta;
    p.Q11 = gamma * Mat::Identity(d, d);
    return p;
}

double abg_zs_error(double alpha, double beta, double gamma, double theta_norm2, double noise_var, int d) {
    const double r = (beta + (d + 2.0) * gamma) * alpha - 1.0;
    return r * r * theta_norm2 + 2.0 * (d + 2.0) * gamma * gamma * alpha * alpha * theta_norm2 + noise_var;
}

AbgStep abg_fs_limit_and_step(double alpha, double beta, double gamma, double eta, double theta_norm2,
                              double noise_var, int d) {
    const double r = gamma * alpha + gamma - 1.0;
    AbgStep s;
    s.loss = theta_norm2 * r * r + noise_var;
    s.d_alpha = -2.0 * eta * gamma * r * theta_norm2;
    s.d_gamma = -2.0 * eta * (alpha + 1.0) * r * theta_norm2;
    s.zs_increase = abg_zs_error(alpha + s.d_alpha, beta, gamma + s.d_gamma, theta_norm2, noise_var, d) -
                    abg_zs_error(alpha, beta, gamma, theta_norm2, noise_var, d);
    return s;
}

double abg_zs_increase_from_optimum(double eta, double theta_norm2, int d) {
    return 16.0 * (d + 2.0) * (d + 4.0) * eta * eta * theta_norm2 * theta_norm2 * theta_norm2;
}

}  // namespace icl
