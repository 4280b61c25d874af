"""CTC on a case small enough to enumerate.

Two frames, one label, uniform outputs: the label can be emitted as
"a a", "a -" or "- a", so the likelihood is 3/4 and the loss -log(3/4).
The forward-backward result is compared with brute-force path enumeration
on a few random instances as well.
"""

import numpy as np

from omrf.ctc import ctc_brute_force, ctc_greedy_decode, ctc_loss
from omrf.nn import log_softmax


def main():
    lp = np.log(np.full((2, 2), 0.5))
    loss, grad = ctc_loss(lp, [0])
    print(f"uniform 2x2, target [0]: loss {float(loss):.6f} (expected {-np.log(0.75):.6f})")
    print("gradient w.r.t. log-probabilities (rows sum to zero):")
    print(np.round(grad, 4))

    rng = np.random.default_rng(1)
    for t_len, target in [(3, [1]), (4, [0, 1]), (5, [1, 1])]:
        lp = log_softmax(rng.standard_normal((t_len, 3)))
        fb = float(ctc_loss(lp, target)[0])
        brute = ctc_brute_force(lp, target)
        print(f"T={t_len} target={target}: forward-backward {fb:.12f}  brute force {brute:.12f}")

    # greedy decoding collapses repeats then drops blanks (blank id = 2 here)
    frames = np.log(np.eye(3)[[0, 0, 2, 0, 1, 1, 2]] * 0.97 + 0.01)
    print("greedy decode of a a - a b b -:", ctc_greedy_decode(frames))


if __name__ == "__main__":
    main()
