//! Functional correctness of the vector operations against scalar
//! oracles: bit-exact for elementwise ops, exact under the documented
//! lane/reduction order for DOT, NRM2 and GEMV.

mod common;

use common::{oracle_groups, random_f32s, OpHarness};
use ndasim::nda::runtime::Scalars;
use ndasim::nda::Opcode;
use ndasim::rng::CounterRng;

fn scalars() -> Scalars {
    Scalars {
        alpha: 1.25,
        beta: -0.5,
        gamma: 0.75,
    }
}

/// Oracle reduction for DOT/NRM2: f32 lane accumulators per (system row,
/// rank) group in ascending (block, slot) order, groups reduced chip-major
/// in f64, summed in instruction order.
fn oracle_reduce(
    map: &ndasim::addressing::MappingConfig,
    v: &ndasim::nda::runtime::HVec,
    term: impl Fn(usize) -> f32,
) -> f64 {
    let mut total = 0.0f64;
    for group in oracle_groups(map, v) {
        let mut lanes = [0.0f32; 16];
        for (block, valid) in group {
            for s in 0..valid {
                let i = block * 16 + s;
                lanes[s] = term(i).mul_add(1.0, lanes[s]);
            }
        }
        let mut g = 0.0f64;
        for lane in lanes {
            g += lane as f64;
        }
        total += g;
    }
    total
}

/// Same but accumulating x[i]*y[i] (or x*x) in the lanes.
fn oracle_dot(
    map: &ndasim::addressing::MappingConfig,
    v: &ndasim::nda::runtime::HVec,
    x: &[f32],
    y: &[f32],
) -> f64 {
    let mut total = 0.0f64;
    for group in oracle_groups(map, v) {
        let mut lanes = [0.0f32; 16];
        for (block, valid) in &group {
            for s in 0..*valid {
                let i = block * 16 + s;
                lanes[s] = x[i].mul_add(y[i], lanes[s]);
            }
        }
        let mut g = 0.0f64;
        for lane in lanes {
            g += lane as f64;
        }
        total += g;
    }
    total
}

#[test]
fn copy_is_bit_exact_and_axpy_identity() {
    let mut h = OpHarness::new(7);
    let mut rng = CounterRng::new(3);
    let n = 1000u64; // exercises the partial tail block
    let x = h.alloc_vec(n);
    let y = h.alloc_vec(n);
    let xv = random_f32s(&mut rng, n as usize);
    h.store_vec(&x, &xv);
    h.run_elementwise(Opcode::Copy, &[&x, &y], Scalars::default());
    let yv = h.load_vec(&y, n as usize);
    for i in 0..n as usize {
        assert_eq!(xv[i].to_bits(), yv[i].to_bits(), "copy differs at {i}");
    }

    // AXPY with alpha=1 and x=0 leaves y bit-identical.
    let zero = h.alloc_vec(n);
    h.store_vec(&zero, &vec![0.0; n as usize]);
    let before = h.load_vec(&y, n as usize);
    h.run_elementwise(
        Opcode::Axpy,
        &[&zero, &y],
        Scalars {
            alpha: 1.0,
            ..Default::default()
        },
    );
    let after = h.load_vec(&y, n as usize);
    for i in 0..n as usize {
        assert_eq!(before[i].to_bits(), after[i].to_bits());
    }
}

#[test]
fn elementwise_ops_match_oracles_bit_exact() {
    let mut h = OpHarness::new(11);
    let mut rng = CounterRng::new(5);
    let n = 4096 + 9;
    let s = scalars();
    let xv = random_f32s(&mut rng, n);
    let yv = random_f32s(&mut rng, n);
    let zv = random_f32s(&mut rng, n);

    // SCAL (in place)
    let x = h.alloc_vec(n as u64);
    h.store_vec(&x, &xv);
    h.run_elementwise(Opcode::Scal, &[&x], s);
    let got = h.load_vec(&x, n);
    for i in 0..n {
        assert_eq!(got[i].to_bits(), (s.alpha * xv[i]).to_bits(), "scal {i}");
    }

    // AXPY: y = alpha*y + x
    let x = h.alloc_vec(n as u64);
    let y = h.alloc_vec(n as u64);
    h.store_vec(&x, &xv);
    h.store_vec(&y, &yv);
    h.run_elementwise(Opcode::Axpy, &[&x, &y], s);
    let got = h.load_vec(&y, n);
    for i in 0..n {
        assert_eq!(
            got[i].to_bits(),
            s.alpha.mul_add(yv[i], xv[i]).to_bits(),
            "axpy {i}"
        );
    }

    // XMY: z = x ⊙ y
    let (x, y, z) = (h.alloc_vec(n as u64), h.alloc_vec(n as u64), h.alloc_vec(n as u64));
    h.store_vec(&x, &xv);
    h.store_vec(&y, &yv);
    h.run_elementwise(Opcode::Xmy, &[&x, &y, &z], s);
    let got = h.load_vec(&z, n);
    for i in 0..n {
        assert_eq!(got[i].to_bits(), (xv[i] * yv[i]).to_bits(), "xmy {i}");
    }

    // AXPBY: z = alpha*x + beta*y
    let (x, y, z) = (h.alloc_vec(n as u64), h.alloc_vec(n as u64), h.alloc_vec(n as u64));
    h.store_vec(&x, &xv);
    h.store_vec(&y, &yv);
    h.run_elementwise(Opcode::Axpby, &[&x, &y, &z], s);
    let got = h.load_vec(&z, n);
    for i in 0..n {
        let want = s.alpha.mul_add(xv[i], s.beta * yv[i]);
        assert_eq!(got[i].to_bits(), want.to_bits(), "axpby {i}");
    }

    // AXPBYPCZ: w = alpha*x + beta*y + gamma*z
    let (x, y, z, w) = (
        h.alloc_vec(n as u64),
        h.alloc_vec(n as u64),
        h.alloc_vec(n as u64),
        h.alloc_vec(n as u64),
    );
    h.store_vec(&x, &xv);
    h.store_vec(&y, &yv);
    h.store_vec(&z, &zv);
    h.run_elementwise(Opcode::Axpbypcz, &[&x, &y, &z, &w], s);
    let got = h.load_vec(&w, n);
    for i in 0..n {
        let want = s.alpha.mul_add(xv[i], s.beta.mul_add(yv[i], s.gamma * zv[i]));
        assert_eq!(got[i].to_bits(), want.to_bits(), "axpbypcz {i}");
    }
}

#[test]
fn dot_and_nrm2_match_reduction_oracle() {
    let mut h = OpHarness::new(13);
    let map = h.sim.core.map.clone();
    let mut rng = CounterRng::new(9);

    let n = 2000;
    let x = h.alloc_vec(n as u64);
    let y = h.alloc_vec(n as u64);
    let xv = random_f32s(&mut rng, n);
    let yv = random_f32s(&mut rng, n);
    h.store_vec(&x, &xv);
    h.store_vec(&y, &yv);
    let t = h.run_elementwise(Opcode::Dot, &[&x, &y], Scalars::default());
    let got = h.reduce(t);
    let want = oracle_dot(&map, &x, &xv, &yv);
    assert_eq!(got, want, "dot exact under documented order");

    // DOT of all-ones over 64 elements is 64 exactly.
    let ones = h.alloc_vec(64);
    h.store_vec(&ones, &[1.0; 64]);
    let t = h.run_elementwise(Opcode::Dot, &[&ones, &ones], Scalars::default());
    assert_eq!(h.reduce(t), 64.0);

    // NRM2 of a unit basis vector is 1 after the square root.
    let e = h.alloc_vec(128);
    let mut ev = vec![0.0f32; 128];
    ev[37] = 1.0;
    h.store_vec(&e, &ev);
    let t = h.run_elementwise(Opcode::Nrm2, &[&e], Scalars::default());
    assert_eq!(h.reduce(t).sqrt(), 1.0);

    // NRM2 matches the lane oracle.
    let t = h.run_elementwise(Opcode::Nrm2, &[&x], Scalars::default());
    let got = h.reduce(t);
    let want = oracle_dot(&map, &x, &xv, &xv);
    assert_eq!(got, want);

    // Reduction of all-zero partials is zero.
    let z = h.alloc_vec(256);
    h.store_vec(&z, &vec![0.0; 256]);
    let t = h.run_elementwise(Opcode::Dot, &[&z, &z], Scalars::default());
    assert_eq!(h.reduce(t), 0.0);
    let _ = oracle_reduce(&map, &z, |_| 0.0);
}

/// GEMV oracle: per rank and row, f32 lane partials over the rank's local
/// 16-element runs in ascending column order; ranks reduced in id order.
fn oracle_gemv(
    map: &ndasim::addressing::MappingConfig,
    a: &ndasim::nda::runtime::HMat,
    av: &[Vec<f32>],
    xv: &[f32],
) -> Vec<f64> {
    use ndasim::nda::runtime::rank_blocks_of_srow;
    let mut ranks: Vec<(u8, u8)> = Vec::new();
    for c in 0..map.channels as u8 {
        for r in 0..map.ranks as u8 {
            ranks.push((c, r));
        }
    }
    let mut y = vec![0.0f64; a.rows as usize];
    for (t, srow_base) in a.alloc.system_rows.iter().enumerate() {
        let rows = a.tile_rows(t as u64) as usize;
        let per = rank_blocks_of_srow(map, *srow_base);
        for rank in &ranks {
            let mut lanes_per_row: Vec<[f32; 16]> = vec![[0.0; 16]; rows];
            if let Some(blocks) = per.get(rank) {
                for p in blocks {
                    let elem = ((p - srow_base) / 4) as usize;
                    let (r, j0) = (elem / a.cols as usize, elem % a.cols as usize);
                    if r >= rows {
                        continue;
                    }
                    let global_row = t * a.rows_per_tile as usize + r;
                    for s in 0..16 {
                        let j = j0 + s;
                        let aval = av[global_row].get(j).copied().unwrap_or(0.0);
                        lanes_per_row[r][s] = aval.mul_add(xv[j], lanes_per_row[r][s]);
                    }
                }
            }
            for (r, lanes) in lanes_per_row.iter().enumerate() {
                let global_row = t * a.rows_per_tile as usize + r;
                if global_row < a.rows as usize {
                    for l in lanes {
                        y[global_row] += *l as f64;
                    }
                }
            }
        }
    }
    y
}

#[test]
fn gemv_identity_and_random_match_oracle() {
    let mut h = OpHarness::new(17);
    let map = h.sim.core.map.clone();

    // Identity (8x8 padded to 16 columns): y = x.
    let a = h.alloc_mat(8, 16);
    let mut av: Vec<Vec<f32>> = vec![vec![0.0; 16]; 8];
    for (i, row) in av.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a.store(&mut h.sim.core.mem, &av);
    let mut xv = vec![0.0f32; 16];
    for (i, v) in xv.iter_mut().enumerate().take(8) {
        *v = (i + 1) as f32;
    }
    let y = h.run_gemv(&a, &xv);
    for i in 0..8 {
        assert_eq!(y[i], xv[i] as f64, "identity gemv row {i}");
    }

    // Random 8x8.
    let mut rng = CounterRng::new(23);
    let a = h.alloc_mat(8, 16);
    let av: Vec<Vec<f32>> = (0..8).map(|_| random_f32s(&mut rng, 16)).collect();
    a.store(&mut h.sim.core.mem, &av);
    let xv = random_f32s(&mut rng, 16);
    let y = h.run_gemv(&a, &xv);
    let want = oracle_gemv(&map, &a, &av, &xv);
    assert_eq!(y, want, "gemv exact under documented order");

    // Wide matrix exercising the column-chunk (accumulate) path:
    // 4 rows x 4096 columns > the 2048-element scratch chunk.
    let a = h.alloc_mat(4, 4096);
    let av: Vec<Vec<f32>> = (0..4).map(|_| random_f32s(&mut rng, 4096)).collect();
    a.store(&mut h.sim.core.mem, &av);
    let xv = random_f32s(&mut rng, 4096);
    let y = h.run_gemv(&a, &xv);
    let want: Vec<f64> = (0..4)
        .map(|r| {
            // f64 reference; chunked f32 lanes drift, so use a tolerance.
            av[r]
                .iter()
                .zip(&xv)
                .map(|(a, x)| *a as f64 * *x as f64)
                .sum::<f64>()
        })
        .collect();
    for r in 0..4 {
        let rel = (y[r] - want[r]).abs() / want[r].abs().max(1e-9);
        assert!(rel < 1e-4, "row {r}: {} vs {}", y[r], want[r]);
    }
}
