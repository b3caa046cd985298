use fockmps::dmrg::{dmrg_ground_state, mpo_from_integrals, SweepConfig};
use fockmps::fock::FockSector;
use fockmps::hamiltonian::{build_model, ed_ground_state, HamiltonianOperator, ModelSpec};

fn main() {
    for l in [4usize, 5, 6] {
        let table = build_model(&ModelSpec::HubbardChain { l, t: 1.0, u: 4.0 }).unwrap();
        let modes = 2 * l;
        let sector = FockSector::new(modes, Some(l), Some((l % 2) as i64)).unwrap();
        let op = HamiltonianOperator::new(&table, sector).unwrap();
        let exact = ed_ground_state(&op).unwrap();
        println!(
            "L={l} ED energy {:.12} gap {:?} degenerate {}",
            exact.energy, exact.gap, exact.degenerate
        );
        for seed in [7u64, 1, 2, 3] {
            let mpo = mpo_from_integrals(&table, modes).unwrap();
            let swept =
                dmrg_ground_state(&mpo, sector, &SweepConfig::with_max_bond(16), seed).unwrap();
            println!(
                "  seed {seed}: energy {:.12} diff {:+.3e} converged {} sweeps {} sector_dev {:.2e} bonds {:?}",
                swept.energy,
                swept.energy - exact.energy,
                swept.converged,
                swept.sweeps_run,
                swept.sector_deviation,
                swept.mps.bond_dims()
            );
            println!("    sweep energies {:?}", swept.sweep_energies);
        }
    }
}
