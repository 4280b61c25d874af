"""Train a reduced model on generated staves and watch the error fall.

The full-size encoder is too slow for numpy on a CPU, so this uses the
same architecture with narrower channels.  A few hundred iterations take a
couple of minutes and bring held-out SyER close to zero.

    python demos/train_synthetic.py [ITERS]
"""

import sys

from omrf.data import build_vocab, synth_generate, synth_samples
from omrf.model import ModelConfig, OmrModel
from omrf.nn import EncoderConfig
from omrf.train import evaluate, fit, predict


def main(iters=400):
    corpus = synth_generate(200, 0, 16)
    vocab = build_vocab([t for _, _, t in corpus])
    samples = synth_samples(corpus, vocab)
    train, held_out = samples[:160], samples[160:]

    cfg = ModelConfig(vocab.size, encoder=EncoderConfig(channels=[8, 16, 32, 32, 32]),
                      hidden=64, lr0=1e-3, lr_min=1e-5, max_iters=iters,
                      augment=False, eval_every=100)
    model = OmrModel(cfg)
    before = evaluate(model, held_out, vocab)
    print(f"untrained: SeER {before.seer:.1f}%  SyER {before.syer:.1f}%")

    result = fit(model, train, vocab, val=held_out, iters=iters)
    for it, rep in result.evals:
        loss = sum(result.losses[it - 100:it]) / 100
        print(f"iter {it:4d}  mean loss {loss:7.3f}  held-out SeER {rep.seer:5.1f}%  "
              f"SyER {rep.syer:5.2f}%")
    print(f"{result.seconds:.0f}s")

    sample = held_out[0]
    print("truth:     ", " ".join(vocab.decode(sample.target)))
    print("predicted: ", " ".join(vocab.decode(predict(model, [sample])[0])))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 400)
