// Temporary diagnostic: compute sup-norm kernel constants per grid reading
// and compare against the reported C_K = 6.26, C_K' = 27.13.
use sparsegcg::model::{Heat2d, Kernel, Sine1d};

fn main() {
    let variants: Vec<(&str, Vec<f64>)> = vec![
        ("corners {0,1/3,2/3,1}", vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]),
        ("centers {1/8,3/8,5/8,7/8}", vec![0.125, 0.375, 0.625, 0.875]),
        ("interior {1/5,2/5,3/5,4/5}", vec![0.2, 0.4, 0.6, 0.8]),
    ];
    let n = 400;
    for (name, nodes) in variants {
        let sensors: Vec<[f64; 2]> = nodes
            .iter()
            .flat_map(|&a| nodes.iter().map(move |&b| [a, b]))
            .collect();
        let k = Heat2d { t: 0.025, sensors };
        let mut val = vec![0.0; 16];
        let mut jac = vec![0.0; 32];
        let (mut ck, mut cf, mut cs, mut c_row) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..=n {
            for j in 0..=n {
                let x = [i as f64 / n as f64, j as f64 / n as f64];
                k.value(&x, &mut val);
                k.jacobian(&x, &mut jac);
                let v2: f64 = val.iter().map(|v| v * v).sum::<f64>().sqrt();
                let fro: f64 = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
                // spectral norm of the 16x2 Jacobian via its 2x2 Gram matrix
                let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                for r in 0..16 {
                    a += jac[2 * r] * jac[2 * r];
                    b += jac[2 * r] * jac[2 * r + 1];
                    c += jac[2 * r + 1] * jac[2 * r + 1];
                }
                let disc = ((a - c) * (a - c) + 4.0 * b * b).sqrt();
                let spec = (0.5 * (a + c + disc)).sqrt();
                let row: f64 = (0..16)
                    .map(|r| (jac[2 * r].powi(2) + jac[2 * r + 1].powi(2)).sqrt())
                    .fold(0.0, f64::max);
                ck = ck.max(v2);
                cf = cf.max(fro);
                cs = cs.max(spec);
                c_row = c_row.max(row);
            }
        }
        println!("{name}: sup|k|={ck:.4} supJ_fro={cf:.4} supJ_spec={cs:.4} supJ_rowmax={c_row:.4}");
    }

    let time_grids: Vec<(&str, Vec<f64>)> = vec![
        ("i/120, i=1..120", (1..=120).map(|i| i as f64 / 120.0).collect()),
        ("(i-1)/119, i=1..120", (0..120).map(|i| i as f64 / 119.0).collect()),
        ("(i-1)/120, i=1..120", (0..120).map(|i| i as f64 / 120.0).collect()),
        ("(i-1/2)/120", (0..120).map(|i| (i as f64 + 0.5) / 120.0).collect()),
    ];
    for (name, times) in time_grids {
        let k = Sine1d { times };
        let mut val = vec![0.0; 120];
        let mut jac = vec![0.0; 120];
        let (mut ck, mut cj) = (0.0f64, 0.0f64);
        let refine = |k: &Sine1d, x0: f64, h: f64, deriv: bool| -> f64 {
            let mut best = 0.0f64;
            let mut buf = vec![0.0; 120];
            for i in 0..=4000 {
                let x = [(x0 - h + 2.0 * h * i as f64 / 4000.0).clamp(0.0, 60.0)];
                if deriv {
                    k.jacobian(&x, &mut buf);
                } else {
                    k.value(&x, &mut buf);
                }
                best = best.max(buf.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
            best
        };
        let (mut xk, mut xj) = (0.0, 0.0);
        let n = 600_000;
        for i in 0..=n {
            let x = [60.0 * i as f64 / n as f64];
            k.value(&x, &mut val);
            k.jacobian(&x, &mut jac);
            let v2: f64 = val.iter().map(|v| v * v).sum::<f64>().sqrt();
            let j2: f64 = jac.iter().map(|v| v * v).sum::<f64>().sqrt();
            if v2 > ck {
                ck = v2;
                xk = x[0];
            }
            if j2 > cj {
                cj = j2;
                xj = x[0];
            }
        }
        let h = 60.0 / n as f64;
        let ck = refine(&k, xk, 2.0 * h, false).max(ck);
        let cj = refine(&k, xj, 2.0 * h, true).max(cj);
        println!("signal {name}: sup|k|={ck:.4} sup|k'|={cj:.4}");
    }

    // Coarse-grid sup scan: which sampling resolution reports 8.44?
    let k = Sine1d {
        times: (0..120).map(|i| i as f64 / 120.0).collect(),
    };
    let mut val = vec![0.0; 120];
    for n in [
        100usize, 200, 240, 256, 300, 400, 500, 512, 600, 750, 1000, 1024, 1200, 2000, 2048, 4096,
    ] {
        let mut ck = 0.0f64;
        for i in 0..=n {
            let x = [60.0 * i as f64 / n as f64];
            k.value(&x, &mut val);
            ck = ck.max(val.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        println!("grid n={n}: sup|k|={ck:.4}");
    }
}
