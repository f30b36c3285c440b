"""Finite-difference sweep over every op and every network path at tiny sizes."""
from __future__ import annotations

import numpy as np

from . import body, losses, nets, rotations
from . import tensor as T
from .gradcheck import grad_check, grad_check_params
from .tensor import Tensor

TOLERANCE = 1e-4


def _weighted(out, w):
    """Scalar probe ``sum(out * w)`` so every output entry gets a distinct weight."""
    return T.tsum(out * Tensor(w.reshape(out.shape)))


def _probe(fn, out_shape, rng):
    w = rng.normal(size=out_shape)
    return lambda *xs: _weighted(fn(*xs), w)


def _op_cases(rng):
    """(name, function of one tensor, point) for each registered op."""
    ops = T.OPS
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    pos = rng.uniform(0.5, 2.0, size=(3, 4))
    c = rng.normal(size=(4, 2))
    v3 = rng.normal(size=(5, 3))
    cases = [
        ("add", lambda x: ops["add"](x, Tensor(b)), a),
        ("sub", lambda x: ops["sub"](Tensor(b), x), a),
        ("mul", lambda x: ops["mul"](x, x * Tensor(b)), a),
        ("div", lambda x: ops["div"](Tensor(b), x), pos),
        ("neg", lambda x: ops["neg"](x), a),
        ("power", lambda x: ops["power"](x, 3.0), pos),
        ("square", lambda x: ops["square"](x), a),
        ("exp", lambda x: ops["exp"](x), a),
        ("log", lambda x: ops["log"](x), pos),
        ("sqrt", lambda x: ops["sqrt"](x), pos),
        ("tanh", lambda x: ops["tanh"](x), a),
        ("sigmoid", lambda x: ops["sigmoid"](x), a),
        ("matmul", lambda x: ops["matmul"](x, Tensor(c)), a),
        ("cross", lambda x: ops["cross"](x, Tensor(v3[::-1].copy())), v3),
        ("reshape", lambda x: ops["reshape"](x, (4, 3)), a),
        ("transpose", lambda x: ops["transpose"](x), a),
        ("slice", lambda x: ops["slice"](x, (slice(1, 3), [0, 2, 2])), a),
        ("concat", lambda x: ops["concat"]([x, Tensor(b), x], axis=1), a),
        ("stack", lambda x: ops["stack"]([x, Tensor(b)], axis=0), a),
        ("broadcast", lambda x: ops["broadcast"](x.reshape(3, 1, 4), (3, 2, 4)), a),
        ("sum", lambda x: ops["sum"](x, axis=0), a),
        ("mean", lambda x: ops["mean"](x, axis=1), a),
        ("max", lambda x: ops["max"](x, axis=1), a),
        ("softmax", lambda x: ops["softmax"](x, axis=1), a),
        ("l2norm", lambda x: ops["l2norm"](x, axis=1), a),
    ]
    out = []
    for name, fn, point in cases:
        shape = fn(Tensor(point)).shape
        out.append((f"op:{name}", _probe(fn, shape, rng), point))
    return out


def _function_cases(rng, tmpl):
    n = 2
    theta = rng.normal(scale=0.5, size=(n, body.POSE_DIM))
    beta = rng.normal(size=(n, body.NUM_BETAS))
    small = rng.normal(scale=1e-4, size=(4, 3))
    joints = rng.normal(size=(n, 3, 3))
    cam = np.column_stack([rng.uniform(0.8, 1.2, n), rng.normal(size=(n, 2))])

    def fk_joints(x):
        return body.pose_body(x, Tensor(beta), tmpl)[0]

    def fk_verts(x):
        return body.pose_body(Tensor(theta), x, tmpl)[1]

    cases = [
        ("rodrigues", rotations.axis_angle_to_rotmat, rng.normal(size=(4, 3))),
        ("rodrigues-small-angle", rotations.axis_angle_to_rotmat, small),
        ("rot6d", rotations.rot6d_to_rotmat, rng.normal(size=(4, 6))),
        ("fk:pose", fk_joints, theta),
        ("fk:shape", fk_verts, beta),
        ("regress-joints", lambda x: body.regress_joints(x, tmpl.joint_regressor),
         rng.normal(size=(n, tmpl.num_vertices, 3))),
        ("projection:points", lambda x: body.project_weak_perspective(x, Tensor(cam)), joints),
        ("projection:camera", lambda x: body.project_weak_perspective(Tensor(joints), x), cam),
    ]
    out = []
    for name, fn, point in cases:
        shape = fn(Tensor(point)).shape
        out.append((name, _probe(fn, shape, rng), point))
    return out


def _loss_cases(rng):
    b, t, j = 2, 3, 4
    x3 = rng.normal(size=(b, t, j, 3))
    x2 = rng.normal(size=(b, t, j, 2))
    vis = (rng.uniform(size=(b, t, j)) > 0.3).astype(float)
    tg, bg = rng.normal(size=(b, t, 9)), rng.normal(size=(b, 10))
    probs = rng.uniform(0.1, 0.9, size=b)
    z = rng.normal(size=(b, t, 5))
    return [
        ("loss:3d", lambda x: losses.loss_3d(x, Tensor(x3 + 0.3)), x3),
        ("loss:2d", lambda x: losses.loss_2d(x, Tensor(x2 - 0.2), vis=vis), x2),
        ("loss:smpl-pose", lambda x: losses.loss_smpl(x, Tensor(tg), Tensor(bg + 1), Tensor(bg)),
         tg + 0.5),
        ("loss:smpl-shape", lambda x: losses.loss_smpl(Tensor(tg), Tensor(tg + 1), x, Tensor(bg)),
         bg + 0.5),
        ("loss:adv", losses.loss_adv_generator, probs),
        ("loss:disc-real", lambda x: losses.loss_discriminator(x, Tensor(probs)), probs[::-1].copy()),
        ("loss:disc-fake", lambda x: losses.loss_discriminator(Tensor(probs), x), probs[::-1].copy()),
        ("loss:mposer-prior", losses.loss_mposer_prior, z),
        ("loss:kl", lambda x: losses.kl_standard_normal(x, Tensor(z[::-1].copy())), z),
    ]


def _network_cases(rng):
    """(name, module, loss closure) for each end-to-end path."""
    b, t = 2, 3
    gen = nets.Generator(n_feat=5, hidden=4, num_layers=2, regressor_hidden=4, iterations=2,
                         rng=rng)
    # larger output gain so the rotation head sits away from the mean pose
    gen.regressor.out.weight.data *= 50.0
    feats = Tensor(rng.normal(size=(b, t, 5)))
    w_gen = rng.normal(size=(b, t, body.NUM_JOINTS, 3, 3))
    w_beta = rng.normal(size=(b, body.NUM_BETAS))
    w_cam = rng.normal(size=(b, t, 3))

    def gen_loss():
        out = gen(feats)
        return _weighted(out.rotmats, w_gen) + _weighted(out.beta, w_beta) + _weighted(out.cam,
                                                                                     w_cam)

    gru = nets.GRU(3, 4, 2, rng, bidirectional=True)
    seq = Tensor(rng.normal(size=(b, t, 3)))
    w_gru = rng.normal(size=(b, t, 8))
    cases = [("gru", gru, lambda: _weighted(nets.gru_stack(seq, gru), w_gru)),
             ("generator", gen, gen_loss)]

    motion = Tensor(rng.normal(size=(b, t, 6)))
    w_d = rng.normal(size=b)
    for pooling in ("attention", "static"):
        disc = nets.MotionDiscriminator(n_in=6, hidden=4, num_layers=2, pooling=pooling,
                                        attn_widths=(4, 4), rng=rng)
        disc.input_mean = rng.normal(scale=0.1, size=6)
        disc.input_scale = rng.uniform(0.5, 2.0, size=6)
        cases.append((f"discriminator:{pooling}", disc,
                      lambda d=disc: _weighted(nets.discriminator_forward(motion, d), w_d)))

    mp = nets.MPoser(n_in=6, hidden=4, num_layers=1, latent=3, rng=rng)
    w_mu, w_ls = rng.normal(size=(b, t, 3)), rng.normal(size=(b, t, 3))
    w_pose = rng.normal(size=(b, t, body.POSE_DIM))

    def mposer_loss():
        mu, logsigma = nets.mposer_encode(motion, mp)
        return (_weighted(mu, w_mu) + _weighted(logsigma, w_ls)
                + _weighted(nets.mposer_decode(mu, mp), w_pose))

    cases.append(("mposer", mp, mposer_loss))
    return cases


def run_gradcheck(seed=0, eps=1e-6, max_coords=20):
    """Worst relative error per component, as an ordered list of (name, error)."""
    rng = np.random.default_rng(seed)
    tmpl = body.make_template(num_vertices=16, seed=seed)
    results = []
    for name, fn, point in _op_cases(rng) + _function_cases(rng, tmpl) + _loss_cases(rng):
        results.append((name, grad_check(fn, point, eps=eps)))
    for name, module, loss_fn in _network_cases(rng):
        errs = grad_check_params(loss_fn, module.parameters(), eps=eps, max_coords=max_coords,
                                 seed=seed)
        results.append((name, max(errs.values())))
    return results


def failing(results, tol=TOLERANCE):
    return [name for name, err in results if not err <= tol]
