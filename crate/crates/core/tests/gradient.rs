mod common;

use common::{uniform, vector, EPS_GRID};
use neural_eot::net::{loss_and_grad, ParamBlocks, ShallowReluNet};
use neural_eot::numerics::{RealMatrix, SeededRng};

const H: f64 = 1e-5;
const MARGIN: f64 = 1e-3;

fn random_net(rng: &mut SeededRng, k: usize, d: usize) -> ShallowReluNet {
    ShallowReluNet {
        k,
        d,
        w: vector(rng, k * d, -1.0, 1.0),
        b: vector(rng, k, -1.0, 1.0),
        beta: vector(rng, k, -1.0, 1.0),
        w0: vector(rng, d, -1.0, 1.0),
        b0: rng.uniform(-1.0, 1.0),
    }
}

fn away_from_kinks(net: &ShallowReluNet, x: &RealMatrix) -> bool {
    x.row_iter().all(|row| {
        (0..net.k).all(|h| {
            let z: f64 = net.b[h] + (0..net.d).map(|c| net.w[h * net.d + c] * row[c]).sum::<f64>();
            z.abs() > MARGIN
        })
    })
}

fn with_param(net: &ShallowReluNet, idx: usize, delta: f64) -> ShallowReluNet {
    let mut out = net.clone();
    let mut seen = 0;
    for block in out.blocks_mut() {
        if idx < seen + block.len() {
            block[idx - seen] += delta;
            break;
        }
        seen += block.len();
    }
    out
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = SeededRng::new(4242, 0);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 50 {
        let d = 1 + rng.uniform(0.0, 4.0) as usize;
        let k = 1 + rng.uniform(0.0, 8.0) as usize;
        let nb = 1 + rng.uniform(0.0, 6.0) as usize;
        let mb = 1 + rng.uniform(0.0, 6.0) as usize;
        let eps = EPS_GRID[checked % 3];
        let net = random_net(&mut rng, k, d);
        let xb = uniform(&mut rng, nb, d, -1.0, 1.0);
        let yb = uniform(&mut rng, mb, d, -1.0, 1.0);
        if !away_from_kinks(&net, &xb) {
            continue;
        }
        checked += 1;
        let (_, grad) = loss_and_grad(&net, &xb, &yb, eps).unwrap();
        let analytic = grad.flatten();
        for (idx, a) in analytic.iter().enumerate() {
            let up = loss_and_grad(&with_param(&net, idx, H), &xb, &yb, eps).unwrap().0;
            let down = loss_and_grad(&with_param(&net, idx, -H), &xb, &yb, eps).unwrap().0;
            let fd = (up - down) / (2.0 * H);
            // the scale floor absorbs difference-quotient rounding (about ulp/h) on vanishing coordinates
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-5);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "coordinate {idx}: analytic {a}, differences {fd}");
        }
    }
    eprintln!("worst relative gradient error {worst:e}");
}
