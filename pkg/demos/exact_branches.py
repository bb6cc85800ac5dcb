"""Branch bookkeeping on the smallest interesting lattice.

Two atoms hop on a three-site chain and site 0 carries the readout
track: an atom landing there picks up the entanglement marking, and
same-site collisions pass the marking on. The state is stored as one
vector per marking word, each word evolving under its own non-Hermitian
generator, yet the sum of all branches follows the plain Schrödinger
evolution exactly and the mean number of unmarked atoms only falls.

Run:  python3 demos/exact_branches.py
"""

import numpy as np

from lecollapse.exact import (
    BranchState,
    LatticeModel,
    build_branch_hamiltonian,
    default_timestep,
    evolve,
    le_occupation,
    reconstruct_standard,
)


def main():
    model = LatticeModel(
        sites=3,
        atoms=2,
        channels=1,
        hop_amplitude=1.0,
        u_strength=0.8,
        v_strength=0.5,
        a_tracks=((0,),),
    )
    h = build_branch_hamiltonian(model)
    print(f"branch space: {h.basis.n_configs} configurations x "
          f"{h.basis.n_words} words")
    print(f"hermitian defect of the branch generator: "
          f"{h.hermitian_defect:.3f} (not a Hermitian matrix)")
    print()

    state = BranchState.from_standard(h.basis)
    dt = default_timestep(h)
    block = max(1, int(round(1.0 / dt)))
    norm0 = np.linalg.norm(reconstruct_standard(state))

    print(f"{'t':>5} {'unmarked atoms':>15} {'marked atoms':>13} "
          f"{'norm drift':>11}")
    for step in range(11):
        occ0 = le_occupation(state, 0)
        occ1 = le_occupation(state, 1)
        drift = abs(np.linalg.norm(reconstruct_standard(state)) - norm0)
        print(f"{step * block * dt:5.1f} {occ0:15.6f} {occ1:13.6f} "
              f"{drift:11.2e}")
        if step < 10:
            state = evolve(state, h, dt, block)

    print()
    print("the marking never retreats, and the reconstructed state keeps")
    print("its norm even though no single branch conserves its own.")


if __name__ == "__main__":
    main()
