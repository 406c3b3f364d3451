use evenrep::engine::{EnergyModel, SimConfig, Simulation};
use evenrep::geometry::{place_poisson, rank_cmp, ActiveIndex, Metric, Region};
use evenrep::protocol::{Protocol, ProtocolParams};
use evenrep::targets::TargetKind;
use proptest::prelude::*;

fn config(c_z: f64, comm_radius: f64) -> SimConfig {
    SimConfig {
        protocol: Protocol::EvenRepH,
        params: ProtocolParams::from_ratio(c_z, 1.0, 200, 3, TargetKind::Hexagonal, comm_radius / 2.0).unwrap(),
        comm_radius,
        period: 10.0,
        energy: EnergyModel::default(),
        charge_initial_broadcast: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    // The nearest active neighbors a node sees locally are exactly the ones a
    // global index query over the active set returns.
    #[test]
    fn local_view_matches_index(
        seed in any::<u64>(),
        c_z in 0.1f64..0.9,
        radius in 0.05f64..0.3,
        toroidal in any::<bool>(),
        steps in 0usize..300,
    ) {
        let metric = if toroidal { Metric::Toroidal } else { Metric::Euclidean };
        let layout = place_poisson(200, Region::unit_square(metric), seed);
        let mut sim = Simulation::new(&layout, config(c_z, radius), seed).unwrap();
        for _ in 0..steps {
            sim.step_async().unwrap();
        }
        let active: Vec<usize> = sim.state().active_ids().collect();
        let index = ActiveIndex::build(&layout, active.iter().copied());
        for id in 0..layout.len() {
            let view = sim.local_view(id);
            let mut local: Vec<(usize, f64)> = view.active_neighbors().map(|n| (n.id, n.distance)).collect();
            local.sort_by(|a, b| rank_cmp(*a, *b));
            local.truncate(3);
            let global = index.k_nearest(layout.position(id), 3, radius, Some(id));
            prop_assert_eq!(local, global);
        }
    }
}
