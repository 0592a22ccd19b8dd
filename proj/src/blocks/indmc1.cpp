// Induction machine in the stationary dq frame, flux linkages as states.
//
//   dpsi_ds/dt = v_ds - r_s i_ds
//   dpsi_qs/dt = v_qs - r_s i_qs
//   dpsi_dr/dt = -(P/2) w_rm psi_qr - r_r i_dr
//   dpsi_qr/dt =  (P/2) w_rm psi_dr - r_r i_qr
//   dw_rm/dt   = (T_em - T_L) / J
//
//   i_ds = Lr/(Lm Le) psi_ds - psi_dr/Le      i_dr = psi_ds/Lm - (Lls/Lm + 1) i_ds
//   i_qs = Lr/(Lm Le) psi_qs - psi_qr/Le      i_qr = psi_qs/Lm - (Lls/Lm + 1) i_qs
//   T_em = (3/4) P Lm (i_qs i_dr - i_ds i_qr)
//
// with Ls = Lls + Lm, Lr = Llr + Lm, Le = Ls Lr / Lm - Lm.

#include <cmath>

#include "builtin.hpp"

namespace flowsim::blocks {

namespace {

// Local variable layout.
enum Var : int { vqs, vds, tl, wrm, psids, psiqs, psidr, psiqr };
// Real parameter layout.
enum Param : int { p_rs, p_rr, p_lls, p_llr, p_lm, p_j, p_poles };
// One-time coefficient layout.
enum Pre : int { c_ls, c_lr, c_le, c_ids, c_inv_le, c_inv_lm, c_leak, c_tem, c_inv_j, c_pp, n_pre };

struct Currents {
    double ids, iqs, idr, iqr, tem;
};

Currents currents(const BlockCall& c) {
    Currents i{};
    i.ids = c.pre(c_ids) * c.var(psids) - c.pre(c_inv_le) * c.var(psidr);
    i.iqs = c.pre(c_ids) * c.var(psiqs) - c.pre(c_inv_le) * c.var(psiqr);
    i.idr = c.pre(c_inv_lm) * c.var(psids) - c.pre(c_leak) * i.ids;
    i.iqr = c.pre(c_inv_lm) * c.var(psiqs) - c.pre(c_leak) * i.iqs;
    i.tem = c.pre(c_tem) * (i.iqs * i.idr - i.ids * i.iqr);
    return i;
}

class Indmc1 final : public BlockTemplate {
public:
    Indmc1() : BlockTemplate(make()) {}

    void validate(const ParamValues& p) const override { (void)one_time(p); }

    std::vector<double> one_time(const ParamValues& p) const override {
        const double rs = p.reals[p_rs], rr = p.reals[p_rr];
        const double lls = p.reals[p_lls], llr = p.reals[p_llr], lm = p.reals[p_lm];
        const double j = p.reals[p_j], poles = p.reals[p_poles];
        if (lm == 0.0) throw TemplateError("indmc1: lm must be non-zero");
        if (j == 0.0) throw TemplateError("indmc1: j must be non-zero");
        if (rs < 0.0 || rr < 0.0) throw TemplateError("indmc1: resistances must be non-negative");
        const double ls = lls + lm;
        const double lr = llr + lm;
        const double coupled = ls * lr / lm;
        const double le = coupled - lm;
        if (!std::isfinite(le) || std::abs(le) <= 1e-12 * std::max(std::abs(coupled), std::abs(lm))) {
            throw TemplateError("indmc1: Le = Ls*Lr/Lm - Lm is zero; the inductance matrix is singular");
        }
        std::vector<double> pre(n_pre);
        pre[c_ls] = ls;
        pre[c_lr] = lr;
        pre[c_le] = le;
        pre[c_ids] = lr / (lm * le);
        pre[c_inv_le] = 1.0 / le;
        pre[c_inv_lm] = 1.0 / lm;
        pre[c_leak] = lls / lm + 1.0;
        pre[c_tem] = 0.75 * poles * lm;
        pre[c_inv_j] = 1.0 / j;
        pre[c_pp] = poles / 2.0;
        return pre;
    }

    void derivatives(const BlockCall& c, std::span<double> f) const override {
        const Currents i = currents(c);
        const double rs = c.real(p_rs), rr = c.real(p_rr), pp = c.pre(c_pp);
        const double w = c.var(wrm);
        f[0] = c.var(vds) - rs * i.ids;
        f[1] = c.var(vqs) - rs * i.iqs;
        f[2] = -pp * (w * c.var(psiqr)) - rr * i.idr;
        f[3] = pp * (w * c.var(psidr)) - rr * i.iqr;
        f[4] = c.pre(c_inv_j) * (i.tem - c.var(tl));
    }

    void residual(const BlockCall& c, std::span<double> g, JacobianSink* jac) const override {
        derivatives(c, g);
        if (jac == nullptr) return;

        const Currents i = currents(c);
        const double rs = c.real(p_rs), rr = c.real(p_rr), pp = c.pre(c_pp);
        const double a = c.pre(c_ids), b = c.pre(c_inv_le), cm = c.pre(c_inv_lm), d = c.pre(c_leak);
        const double e = c.pre(c_tem), k = c.pre(c_inv_j);
        const double w = c.var(wrm);

        // Partials of the rotor currents w.r.t. the fluxes.
        const double didr_dpsids = cm - d * a;
        const double didr_dpsidr = d * b;

        jac->set(0, vds, 1.0);
        jac->set(0, psids, -rs * a);
        jac->set(0, psidr, rs * b);

        jac->set(1, vqs, 1.0);
        jac->set(1, psiqs, -rs * a);
        jac->set(1, psiqr, rs * b);

        jac->set(2, wrm, -pp * c.var(psiqr));
        jac->set(2, psiqr, -pp * w);
        jac->set(2, psids, -rr * didr_dpsids);
        jac->set(2, psidr, -rr * didr_dpsidr);

        jac->set(3, wrm, pp * c.var(psidr));
        jac->set(3, psidr, pp * w);
        jac->set(3, psiqs, -rr * didr_dpsids);
        jac->set(3, psiqr, -rr * didr_dpsidr);

        jac->set(4, tl, -k);
        jac->set(4, psids, k * e * (i.iqs * didr_dpsids - i.iqr * a));
        jac->set(4, psidr, k * e * b * (d * i.iqs + i.iqr));
        jac->set(4, psiqs, k * e * (i.idr * a - i.ids * didr_dpsids));
        jac->set(4, psiqr, -k * e * b * (i.idr + d * i.ids));
    }

    void out_params(const BlockCall& c, std::span<double> v) const override {
        const Currents i = currents(c);
        v[0] = i.tem;
        v[1] = c.var(wrm);
        v[2] = i.ids;
        v[3] = i.iqs;
        v[4] = i.idr;
        v[5] = i.iqr;
        v[6] = c.var(psids);
        v[7] = c.var(psiqs);
        v[8] = c.var(psidr);
        v[9] = c.var(psiqr);
    }

private:
    static TemplateInfo make() {
        TemplateInfo info;
        info.name = "indmc1";
        info.kind = BlockKind::integrate;
        info.inputs = {"vqs", "vds", "tl"};
        info.outputs = {"wrm"};
        info.aux = {"psids", "psiqs", "psidr", "psiqr"};
        info.real_params = {{"rs", 0.435}, {"rr", 0.816}, {"lls", 2.0e-3}, {"llr", 2.0e-3},
                            {"lm", 69.31e-3}, {"j", 0.089}, {"poles", 4.0}};
        info.startup_params = {{"psids_st", 0.0}, {"psiqs_st", 0.0}, {"psidr_st", 0.0},
                               {"psiqr_st", 0.0}, {"wrm_st", 0.0}};
        info.out_params = {"tem", "wrm", "ids", "iqs", "idr", "iqr", "psids", "psiqs", "psidr", "psiqr"};
        info.f_var = {psids, psiqs, psidr, psiqr, wrm};
        info.g_vars = {{vds, psids, psidr},
                       {vqs, psiqs, psiqr},
                       {wrm, psiqr, psids, psidr},
                       {wrm, psidr, psiqs, psiqr},
                       {tl, psids, psidr, psiqs, psiqr}};
        info.jacobian = JacobianKind::variable;
        return info;
    }
};

}  // namespace

void register_indmc1(TemplateRegistry& reg) { reg.add(std::make_unique<Indmc1>()); }

}  // namespace flowsim::blocks
