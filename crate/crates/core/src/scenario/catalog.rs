//! Built-in scenarios for the split IEEE 14-bus study and the reference
//! attack vectors that can be replayed against them.

use std::collections::BTreeMap;

use crate::admm::Side;
use crate::attacks::parse_attack_values;
use crate::network::Component;

use super::{AttackSpec, ScenarioSpec, DEFAULT_BASE_SEED};

/// Boundary bus every built-in attack targets.
pub const TARGET_BUS: usize = 4;
/// Voltage the goal-oriented scenarios push toward, p.u.
pub const GOAL_V_U: f64 = 1.1;
/// Trials per randomized evasive scenario.
pub const PROPOSITION1_TRIALS: usize = 10;
/// Attack iterations of the randomized and goal-oriented blocks.
pub const BLOCK_ITERATIONS: [usize; 6] = [3, 20, 50, 100, 150, 210];

/// `(id, side, iteration, [(component, percent)])`.
type NaiveRow = (u32, Side, usize, &'static [(Component, f64)]);

const NAIVE_ROWS: [NaiveRow; 16] = [
    (2, Side::X, 3, &[(Component::Q, 10.0)]),
    (3, Side::X, 3, &[(Component::Q, 3.5)]),
    (4, Side::X, 3, &[(Component::Q, -10.0)]),
    (5, Side::X, 3, &[(Component::Q, -3.0)]),
    (6, Side::X, 210, &[(Component::Q, 5.0)]),
    (7, Side::X, 210, &[(Component::Q, 3.5)]),
    (8, Side::Z, 3, &[(Component::Q, 50.0)]),
    (9, Side::Z, 3, &[(Component::Q, 100.0)]),
    (10, Side::Z, 3, &[(Component::Q, 150.0)]),
    (11, Side::Z, 3, &[(Component::Q, 250.0)]),
    (12, Side::Z, 3, &[(Component::Q, 3.0)]),
    (13, Side::Z, 3, &[(Component::Q, -50.0)]),
    (14, Side::Z, 3, &[(Component::V, 10.0), (Component::Q, -25.0)]),
    (15, Side::Z, 3, &[(Component::V, 10.0), (Component::Theta, 50.0), (Component::P, 20.0), (Component::Q, -25.0)]),
    (16, Side::Z, 210, &[(Component::Q, 5.0)]),
    (17, Side::Z, 210, &[(Component::Q, 3.0)]),
];

/// The 83 study scenarios.
pub fn builtin_catalog() -> Vec<ScenarioSpec> {
    let mut out = vec![ScenarioSpec { id: 1, attack: AttackSpec::Clean, trials: 1, base_seed: DEFAULT_BASE_SEED }];
    for (id, side, iteration, parts) in NAIVE_ROWS {
        let percent: BTreeMap<Component, f64> = parts.iter().copied().collect();
        out.push(ScenarioSpec {
            id,
            attack: AttackSpec::Naive { side, iteration, targets: vec![TARGET_BUS], percent },
            trials: 1,
            base_seed: DEFAULT_BASE_SEED,
        });
    }
    for (block, &iteration) in BLOCK_ITERATIONS.iter().enumerate() {
        for j in 0..10 {
            out.push(ScenarioSpec {
                id: 18 + 10 * block as u32 + j,
                attack: AttackSpec::Proposition1 { side: Side::Z, iteration, targets: vec![TARGET_BUS] },
                trials: PROPOSITION1_TRIALS,
                base_seed: DEFAULT_BASE_SEED,
            });
        }
    }
    for (j, &iteration) in BLOCK_ITERATIONS.iter().enumerate() {
        out.push(ScenarioSpec {
            id: 78 + j as u32,
            attack: AttackSpec::GoalOriented { side: Side::Z, iteration, targets: vec![TARGET_BUS], v_u: GOAL_V_U },
            trials: 1,
            base_seed: DEFAULT_BASE_SEED,
        });
    }
    out
}

/// Looks up one built-in scenario.
pub fn builtin(id: u32) -> Option<ScenarioSpec> {
    builtin_catalog().into_iter().find(|s| s.id == id)
}

/// Reference per-scenario attack vectors on bus 4, `[V, Theta, p, q]`, as
/// printed. Row 46 has a malformed exponent (`-9.14259-05`).
pub const REFERENCE_VECTORS: &str = "\
18 [0.02121068 0.0130993  0.12314844 0.0864099 ]
19 [0.07341862 0.06317238 0.11244587 0.03505106]
20 [0.05369313 0.00871949 0.12110739 0.07501809]
21 [0.01541827 0.07886334 0.11617012 0.05745474]
22 [0.06255644 0.01532933 0.11979587 0.06895177]
23 [0.05273261 0.09606387 0.10602196 0.00201061]
24 [0.06933667 0.02945763 0.11788314 0.06067893]
25 [0.04830191 0.05887625 0.11715014 0.06107415]
26 [0.01850385 0.08056118 0.11569358 0.05510166]
27 [0.03478083 0.10240982 0.10712628 0.00895416]
28 [6.52923e-05  1.11296e-04  9.81143e-05 -1.25645e-04]
29 [8.28166e-05  1.71912e-05  1.57168e-04 -1.01030e-04]
30 [2.33227e-05  9.23689e-05  1.45938e-04 -1.08116e-04]
31 [6.57201e-05  9.67342e-05  1.21174e-04 -1.17061e-04]
32 [1.17634e-04  7.47446e-05  6.61172e-05 -1.35156e-04]
33 [8.55322e-05  8.13466e-05  1.20480e-04 -1.16682e-04]
34 [8.27203e-05  8.71954e-05  1.16819e-04 -1.18198e-04]
35 [3.01434e-06  7.89714e-05  1.58809e-04 -1.02943e-04]
36 [5.52432e-05  1.04791e-04  1.18457e-04 -1.18312e-04]
37 [1.28545e-04  4.18002e-05  8.94557e-05 -1.25657e-04]
38 [0.00033554 0.00060707 0.00127095 0.00013236]
39 [6.06571e-04 4.56323e-04 1.23767e-03 7.72225e-05]
40 [0.0001615   0.00090441  0.00112068 -0.00011829]
41 [0.0004926   0.00083299  0.00106443 -0.00021075]
42 [0.00025234 0.00065363 0.00126768 0.00012666]
43 [8.81615e-04  3.67449e-05  1.15372e-03 -6.53645e-05]
44 [5.56211e-04 5.30295e-04 1.23234e-03 6.85818e-05]
45 [0.00024766 0.00066986 0.00126115 0.00011582]
46 [6.42585e-04  6.34219e-04  1.13597e-03 -9.14259-05]
47 [0.00028043 0.00027531 0.00136882 0.00029301]
48 [1.10091e-04  7.24838e-05 -4.05319e-05 -1.30556e-04]
49 [7.70328e-05  1.04375e-04 -1.01420e-04 -9.45919e-05]
50 [3.68833e-05  1.29133e-04 -8.66583e-05 -1.02549e-04]
51 [4.36177e-05  1.26842e-04 -4.52692e-05 -1.26574e-04]
52 [8.86995e-05  1.02790e-04 -6.93971e-05 -1.13192e-04]
53 [7.31012e-05  9.23426e-05 -8.29755e-06 -1.48735e-04]
54 [1.51510e-05  8.37389e-05  2.48265e-05 -1.67940e-04]
55 [5.45215e-05  1.22520e-04 -8.69528e-05 -1.02553e-04]
56 [9.88206e-05  8.50837e-05 -3.48270e-05 -1.33582e-04]
57 [1.14445e-04  6.52528e-05 -4.08441e-05 -1.30529e-04]
58 [1.52442e-04  6.38828e-05  2.64114e-04 -1.48861e-04]
59 [0.00013494  0.00018196  0.00018477 -0.00018379]
60 [2.31975e-04  5.33502e-05  1.48807e-04 -2.01080e-04]
61 [0.00010482  0.00014033  0.00025586 -0.00015195]
62 [1.73608e-04  3.61746e-05  2.53083e-04 -1.54066e-04]
63 [1.47308e-05  1.81783e-04  2.49261e-04 -1.54410e-04]
64 [1.91624e-04  9.71710e-05  2.06146e-04 -1.74863e-04]
65 [1.72501e-04  7.49430e-05  2.42232e-04 -1.58701e-04]
66 [0.00010181  0.00021101  0.00016562 -0.00019213]
67 [1.41356e-04  5.52496e-05  2.74632e-04 -1.44149557e-04]
68 [8.19125e-05 4.59841e-04 1.08182e-03 5.64933e-04]
69 [0.00060425 0.00040423 0.0010303  0.00034295]
70 [0.00050432 0.00034494 0.00105841 0.0004627 ]
71 [0.00075692 0.0002196  0.00101032 0.00025642]
72 [5.461385e-05 3.43557e-04 1.09533e-03 6.21999e-04]
73 [0.00035637 0.00059902 0.00103831 0.00037914]
74 [4.72707e-04 9.57743e-05 1.08032e-03 5.54913e-04]
75 [5.74563e-04  7.05504e-04  9.36370e-04 -5.47820e-05]
76 [0.00025254 0.00075649 0.00100612 0.00024358]
77 [0.00073719  0.00054561  0.00092492 -0.00010501]
78 [0.06150997  0.0029498   0.08841819 -0.10452701]
79 [6.02433e-02 -6.51130e-06  4.28351e-05 -4.23917e-02]
80 [5.78314e-02  4.18136e-06  8.05939e-04 -4.40490e-02]
81 [5.66638e-02  2.08856e-06 -6.12412e-05 -4.42714e-02]
82 [5.64804e-02  1.22251e-06  9.13973e-05 -4.44684e-02]
83 [5.64435e-02 -2.77430e-09  9.01191e-04 -4.44423e-02]
";

/// Malformed tokens in the reference table and their evident reading.
const CORRECTIONS: [(&str, &str); 1] = [("-9.14259-05", "-9.14259e-05")];

/// Reference vectors by scenario id, with known typos corrected.
pub fn reference_vectors() -> BTreeMap<u32, Vec<f64>> {
    REFERENCE_VECTORS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (id, rest) = line.split_once(' ').expect("id then vector");
            let fixed = CORRECTIONS.iter().fold(rest.to_string(), |acc, (bad, good)| acc.replace(bad, good));
            let values = parse_attack_values(&fixed).expect("reference vector parses");
            (id.parse().expect("numeric id"), values)
        })
        .collect()
}

/// Replays the reference vector of a built-in attack scenario at the same
/// iteration and side.
pub fn reference_replay(id: u32) -> Option<ScenarioSpec> {
    let vector = reference_vectors().remove(&id)?;
    let base = builtin(id)?;
    let (side, iteration, targets) = base.attack.placement()?;
    Some(ScenarioSpec {
        id,
        attack: AttackSpec::Replay { side, iteration, targets: targets.to_vec(), vector },
        trials: 1,
        base_seed: base.base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_is_complete() {
        let v = reference_vectors();
        assert_eq!(v.len(), 66);
        assert!(v.values().all(|x| x.len() == 4));
        assert_eq!(v[&46][3], -9.14259e-05);
        assert_eq!(v[&18], vec![0.02121068, 0.0130993, 0.12314844, 0.0864099]);
    }

    #[test]
    fn replay_keeps_placement() {
        let r = reference_replay(18).unwrap();
        assert_eq!(r.attack.placement().unwrap().1, 3);
        assert!(reference_replay(8).is_none());
    }
}
