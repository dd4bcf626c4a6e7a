use artic::autograd::{grad_check, Padding, Tape, Tensor, Var};
use artic::ncmf::{ModelVars, NcmfModel};
use artic::numkit::Mat;
use artic::recog::{ctc_loss, ctc_loss_and_grad, ctc_on, CtcHead, HeadVars};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut Pcg64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape.to_vec(),
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn check(name: &str, x: &Tensor, f: impl Fn(&mut Tape, Var) -> artic::autograd::Result<Var>) {
    let err = grad_check(f, x, STEP).unwrap();
    assert!(err <= TOL, "{name}: relative error {err:e}");
}

#[test]
fn elementwise_and_reductions() {
    let mut rng = Pcg64::seed_from_u64(1);
    let x = random(&[3, 7], &mut rng);
    let other = random(&[3, 7], &mut rng);
    check("sum", &x, |t, v| Ok(t.sum(v)));
    check("mean", &x, |t, v| Ok(t.mean(v)));
    check("scale", &x, |t, v| {
        let s = t.scale(v, -2.5);
        Ok(t.sum(s))
    });
    check("add", &x, |t, v| {
        let o = t.leaf(other.clone());
        let s = t.add(v, o)?;
        let sq = t.mul(s, s)?;
        Ok(t.sum(sq))
    });
    check("sub", &x, |t, v| {
        let o = t.leaf(other.clone());
        let s = t.sub(o, v)?;
        let sq = t.mul(s, s)?;
        Ok(t.sum(sq))
    });
    check("mul", &x, |t, v| {
        let o = t.leaf(other.clone());
        let m = t.mul(v, o)?;
        Ok(t.sum(m))
    });
    check("mse", &x, |t, v| {
        let o = t.leaf(other.clone());
        t.mse(v, o)
    });
}

#[test]
fn relu_away_from_kink() {
    let mut rng = Pcg64::seed_from_u64(2);
    let mut x = random(&[4, 6], &mut rng);
    for v in x.data_mut() {
        if v.abs() < 0.05 {
            *v = 0.3;
        }
    }
    check("relu", &x, |t, v| {
        let r = t.relu(v);
        let sq = t.mul(r, r)?;
        Ok(t.sum(sq))
    });
}

#[test]
fn convolutions() {
    let mut rng = Pcg64::seed_from_u64(3);
    let x = random(&[3, 9], &mut rng);
    let k = random(&[4, 3, 2], &mut rng);
    let w = random(&[2, 9], &mut rng);
    for padding in [Padding::Same, Padding::Causal] {
        let obj = |t: &mut Tape, xv: Var, kv: Var| {
            let y = t.conv1d(xv, kv, padding)?;
            let wv = t.leaf(w.clone());
            let m = t.mul(y, wv)?;
            Ok(t.sum(m))
        };
        check("conv1d input", &x, |t, v| {
            let kv = t.leaf(k.clone());
            obj(t, v, kv)
        });
        check("conv1d kernel", &k, |t, v| {
            let xv = t.leaf(x.clone());
            obj(t, xv, v)
        });
    }
}

#[test]
fn bias() {
    let mut rng = Pcg64::seed_from_u64(4);
    let x = random(&[3, 5], &mut rng);
    let b = random(&[3], &mut rng);
    check("add_bias", &b, |t, v| {
        let xv = t.leaf(x.clone());
        let y = t.add_bias(xv, v)?;
        let sq = t.mul(y, y)?;
        Ok(t.sum(sq))
    });
}

#[test]
fn hoyer() {
    let mut rng = Pcg64::seed_from_u64(5);
    let mut x = random(&[3, 8], &mut rng);
    for v in x.data_mut() {
        *v = v.abs() + 0.1;
    }
    check("mean_hoyer", &x, |t, v| t.mean_hoyer(v));
}

#[test]
fn ctc_gradient_matches_differences() {
    let mut rng = Pcg64::seed_from_u64(6);
    let z = Mat::from_fn(6, 4, |_, _| rng.gen_range(-2.0..2.0));
    let target = [1, 3, 3];
    let (_, grad) = ctc_loss_and_grad(&z, &target).unwrap();
    for r in 0..6 {
        for c in 0..4 {
            let mut up = z.clone();
            up[(r, c)] += STEP;
            let mut down = z.clone();
            down[(r, c)] -= STEP;
            let numeric = (ctc_loss(&up, &target).unwrap() - ctc_loss(&down, &target).unwrap())
                / (2.0 * STEP);
            let a = grad[(r, c)];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            assert!(err <= TOL, "({r},{c}): {a} vs {numeric}");
        }
    }
}

struct Tiny {
    model: NcmfModel,
    head: CtcHead,
    y: Tensor,
    target: Vec<usize>,
}

fn tiny() -> Tiny {
    let mut rng = Pcg64::seed_from_u64(7);
    let t = 30;
    let y = Tensor::from_vec(
        vec![5, t],
        (0..5 * t).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    Tiny {
        model: NcmfModel::new(3, 4, 11).unwrap(),
        head: CtcHead::new(3, 4, 12).unwrap(),
        y,
        target: vec![1, 2, 3, 1],
    }
}

/// `mse − λ₁·S(H) + λ₂·ctc` for one sequence.
fn full_loss(
    tape: &mut Tape,
    vars: &ModelVars,
    head: &HeadVars,
    y: &Tensor,
    target: &[usize],
) -> artic::autograd::Result<Var> {
    let yv = tape.leaf(y.clone());
    let h = NcmfModel::encode_on(tape, vars, yv).unwrap();
    let y_hat = NcmfModel::decode_on(tape, vars, h).unwrap();
    let mse = tape.mse(y_hat, yv)?;
    let sp = tape.mean_hoyer(h)?;
    let neg = tape.scale(sp, -0.5);
    let loss = tape.add(mse, neg)?;
    let z = CtcHead::logits_on(tape, head, h).unwrap();
    let c = ctc_on(tape, z, target).unwrap();
    let weighted = tape.scale(c, 0.3);
    tape.add(loss, weighted)
}

#[test]
fn full_loss_every_parameter() {
    let s = tiny();
    let params = s.model.params();
    for (i, p) in params.iter().enumerate() {
        check(&format!("model parameter {i}"), p, |tape, v| {
            let mut vars = s.model.bind(tape);
            match i {
                0 => vars.enc1 = v,
                1 => vars.enc1_bias = v,
                2 => vars.enc2 = v,
                3 => vars.enc2_bias = v,
                _ => vars.dec = v,
            }
            let hv = s.head.bind(tape);
            full_loss(tape, &vars, &hv, &s.y, &s.target)
        });
    }
    check("head kernel", &s.head.kernel, |tape, v| {
        let vars = s.model.bind(tape);
        let mut hv = s.head.bind(tape);
        hv.kernel = v;
        full_loss(tape, &vars, &hv, &s.y, &s.target)
    });
    check("scores", &s.y, |tape, v| {
        let vars = s.model.bind(tape);
        let hv = s.head.bind(tape);
        let h = NcmfModel::encode_on(tape, &vars, v).unwrap();
        let y_hat = NcmfModel::decode_on(tape, &vars, h).unwrap();
        let mse = tape.mse(y_hat, v)?;
        let sp = tape.mean_hoyer(h)?;
        let neg = tape.scale(sp, -0.5);
        let loss = tape.add(mse, neg)?;
        let z = CtcHead::logits_on(tape, &hv, h).unwrap();
        let c = ctc_on(tape, z, &s.target).unwrap();
        let weighted = tape.scale(c, 0.3);
        tape.add(loss, weighted)
    });
}
