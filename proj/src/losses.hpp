#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "camera.hpp"
#include "tape.hpp"

namespace dmk::loss {

using Rgb = std::array<ad::Var, 3>;

// SSIM stabilisers.
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct HyperParams {
    // Calibrated on the synthetic dynamic scene; at 1.0 the regularizer
    // flattens real object motion along with the background.
    double alpha_mot = 0.03;
    double beta_mot = 0.03;
    double alpha_dep = 1e-2;
    double alpha_cyc = 1e-3;
    double beta_cyc = 5e-2;
    double alpha_rgb = 0.85;
    double beta_rgb = 3.0;
    double eps_norm = 1e-6;
    // Tolerance of the occlusion test z' <= D_warp + eps_occ.
    double eps_occ = 1e-3;

    void validate() const;
};

// Sum over x, y, z of mean sqrt((d_u T_i)^2 + (d_v T_i)^2 + eps_abs^2).
ad::Var group_smoothness(const ad::VarField3& t);

// Self-normalising L1/2 penalty:
//   2 * sum_i <|T_i|> * mean sqrt(1 + |T_i| / <|T_i|>)
// A channel whose mean magnitude is below eps_norm contributes 0.
ad::Var sparsity_l_half(const ad::VarField3& t, double eps_norm = 1e-6);

// alpha_mot * group_smoothness + beta_mot * sparsity_l_half, on T_obj only.
ad::Var motion_regularizer(const ad::VarField3& t_obj, const HyperParams& h);

// Edge-aware smoothness of the disparity map, weighted by alpha_dep.
ad::Var depth_smoothness(ad::Var disparity, const Rgb& image, const HyperParams& h);

struct CycleTerms {
    ad::Var rotation;     // alpha_cyc-weighted
    ad::Var translation;  // beta_cyc-weighted
};

// Forward/backward motion agreement. `t_inv_warped` is the reverse field read
// at the forward-warped coordinates; pixels with mask 0 contribute nothing.
CycleTerms cycle_consistency(const geom::VarMat3& r, const ad::VarField3& t, const geom::VarMat3& r_inv,
                             const ad::VarField3& t_inv_warped, const Field& mask, const HyperParams& h);

// Mean structural similarity over pixels and channels, 3x3 uniform window.
ad::Var ssim(const Rgb& a, const Rgb& b);

struct PhotoTerms {
    ad::Var l1;    // alpha_rgb-weighted
    ad::Var ssim;  // beta_rgb-weighted (1 - SSIM) / 2
};

// 1 where the warped point is not hidden: z' <= D_warp + eps_occ.
Field visibility_mask(ad::Var z_prime, ad::Var d_warp, double eps_occ);

// Occlusion-masked L1 (summed over channels) plus SSIM dissimilarity. Both
// terms see only pixels with visibility * mask = 1; the visibility test is
// evaluated on values and carries no gradient.
PhotoTerms photometric_loss(const Rgb& image, const Rgb& image_warp, ad::Var z_prime, ad::Var d_warp,
                            const Field& mask, const HyperParams& h);

// ---------------------------------------------------------------------------
// Full bidirectional objective.

struct FrameVars {
    Rgb image;
    ad::Var depth;
};

struct MotionVars {
    geom::VarMat3 rotation;
    std::array<ad::Var, 3> t_ego;
    ad::VarField3 t_obj;
};

struct LossBreakdown {
    ad::Var group_smooth, sparsity, depth_smooth, cyc_rot, cyc_trans, photo_l1, photo_ssim, total;

    // Name/value pairs in a fixed order; every component is already weighted
    // and `total` is their plain sum.
    std::vector<std::pair<std::string, double>> values() const;
};

// Applies motion regularisation, cycle and photometric consistency in both
// directions (a->b then b->a) and depth smoothness on each frame.
LossBreakdown pair_loss(const FrameVars& a, const FrameVars& b, const MotionVars& ab, const MotionVars& ba,
                        const geom::CameraVars& k, const HyperParams& h);

}  // namespace dmk::loss
