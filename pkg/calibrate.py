"""Scratch calibration: accuracy/contrast behavior at default settings (not shipped)."""
import time

import factorcap as fc
from factorcap import model as M
from factorcap.corpus import CorpusSpec, generate_dataset
from factorcap.decoding import DecodeConfig, Strategy, decode_corpus
from factorcap.metrics import FactorSource, evaluate


def run(seed, sigma):
    spec = CorpusSpec(n_train=2000, n_dev=200, n_test=200, noise_sigma=sigma, seed=seed)
    ds = generate_dataset(spec)
    out = {}
    for mode in (M.TargetMode.CAPTION, M.TargetMode.FCC_GOLDEN):
        t0 = time.time()
        res = M.train(ds, mode, M.TrainConfig(seed=seed))
        t = time.time() - t0
        out[mode.value] = (res, t)
        print(f"  seed={seed} sigma={sigma} {mode.value}: epochs={len(res.log)} "
              f"best={res.best_epoch} dev={res.best_dev_loss:.4f} time={t:.0f}s", flush=True)
    rows = {}
    for mode, (res, _) in out.items():
        strategies = [Strategy.GREEDY, Strategy.SAMPLING] + ([Strategy.GTS] if mode != "caption" else [])
        for strat in strategies:
            cfgd = DecodeConfig(strategy=strat, seed=seed)
            dec = decode_corpus(res.model, ds.test, cfgd)
            src = FactorSource.PHRASE_PREFIX if mode != "caption" else FactorSource.CAPTION_LEXICON
            rep = evaluate(dec, ds.test, factor_source=src)
            rows[(mode, strat.value)] = rep
            print(f"    {mode}/{strat.value}: b4={rep.bleu4:.3f} rou={rep.rouge_l:.3f} "
                  f"met={rep.meteor_lite:.3f} d1={rep.distinct1:.3f} d2={rep.distinct2:.3f} "
                  f"avg={rep.factors.avg:.1f} (g={rep.factors.gender:.1f} p={rep.factors.pitch:.1f} "
                  f"s={rep.factors.speed:.1f} v={rep.factors.volume:.1f})", flush=True)
    a = rows[("fcc-golden", "greedy")].factors.avg >= rows[("caption", "greedy")].factors.avg
    b = rows[("fcc-golden", "gts")].distinct2 > rows[("fcc-golden", "greedy")].distinct2
    c = rows[("fcc-golden", "gts")].factors.avg >= rows[("fcc-golden", "sampling")].factors.avg
    d = rows[("caption", "sampling")].factors.avg <= rows[("caption", "greedy")].factors.avg
    print(f"  seed={seed} sigma={sigma} checks: a={a} b={b} c={c} d={d}", flush=True)
    return rows


print("=== sigma=0 (criterion 8) ===", flush=True)
rows0 = run(0, 0.0)

print("=== sigma=0.5 over 3 seeds (criterion 7) ===", flush=True)
t0 = time.time()
for s in (0, 1, 2):
    run(s, 0.5)
print(f"total sigma=0.5 wall: {time.time()-t0:.0f}s", flush=True)
