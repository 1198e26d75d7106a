"""Command-line entry point: ``ldmkit {train,eval,generate,project,gradcheck} CONFIG``.

A run is described by one JSON file; ``--set a.b=value`` overrides entries
(values parse as JSON when possible, else as strings). Exit codes: 1 config
error, 2 data error, 3 numerical failure.
"""
import argparse
import copy
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources

import numpy as np

from . import disee, hbdm, ldm, skellam
from .eval import (circular_coords, evaluate, format_stats, ordered_adjacency, pca_project,
                   reconstruction_stats, score_pairs, signed_task_sets, write_coords_csv,
                   write_metrics_json)
from .graph import (Graph, GraphFormatError, SplitError, load_edge_list, read_test_pairs, split_edges,
                    write_edge_list, write_split)
from .ldm import SimplexConfig, softmax
from .optim import NumericalError, TrainConfig, check_gradients

log = logging.getLogger("ldmkit")

MODELS = ("ldm", "hbdm", "hm_ldm", "sldm", "shm_ldm", "slim", "disee")
SIMPLEX_MODELS = ("hm_ldm", "shm_ldm", "slim")
SIGNED = ("sldm", "shm_ldm", "slim")
EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3
_TOP_KEYS = {"model", "input", "output_dir", "directed", "bipartite", "extra_capacity", "D", "simplex",
             "impact", "train", "split", "generate", "project", "gradcheck", "appearance_file", "rebuild_every"}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# configuration

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {p!r} is not a section")
        node[parts[-1]] = _parse_value(text)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path, overrides=None) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    cfg = apply_overrides(cfg, overrides)
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = os.path.dirname(os.path.abspath(path))
    for key in ("input", "output_dir", "appearance_file"):
        v = cfg.get(key)
        if isinstance(v, str) and not v.startswith("builtin:") and not os.path.isabs(v):
            cfg[key] = os.path.join(base, v)
    return cfg


def validate(cfg: dict, need_input=True) -> None:
    model = cfg.get("model")
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    directed = bool(cfg.get("directed", False))
    bipartite = bool(cfg.get("bipartite", False))
    extra = bool(cfg.get("extra_capacity", False))
    if directed and bipartite:
        raise ConfigError("a graph is either directed or bipartite")
    if extra and (model not in ("sldm", "slim") or not directed):
        raise ConfigError("extra_capacity applies to directed sldm/slim only")
    if model in ("hm_ldm", "shm_ldm") and (directed or bipartite):
        raise ConfigError(f"{model} supports undirected graphs only")
    if model == "hbdm" and directed:
        raise ConfigError("hbdm supports undirected and bipartite graphs")
    if model in SIGNED and bipartite:
        raise ConfigError(f"{model} does not support bipartite graphs")
    if model == "disee" and not directed:
        raise ConfigError("disee needs a directed (citation-style) graph")
    D = cfg.get("D", 2)
    if not isinstance(D, int) or D < 1:
        raise ConfigError("D must be a positive integer")
    if need_input and "input" not in cfg:
        raise ConfigError("config needs an input edge list")
    if "output_dir" not in cfg:
        raise ConfigError("config needs output_dir")
    if model in SIMPLEX_MODELS and model != "slim":
        _simplex_deltas(cfg)
    try:
        if model == "disee":
            _impact(cfg)
        train_cfg(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))


def _simplex_deltas(cfg):
    s = cfg.get("simplex", {})
    p = s.get("p", 2)
    if p not in (1, 2):
        raise ConfigError("simplex.p must be 1 or 2")
    deltas = s.get("delta_schedule", [s.get("delta", 1.0)])
    if not deltas or any(not float(d) > 0 for d in deltas):
        raise ConfigError("simplex deltas must be positive")
    return [float(d) for d in deltas], int(p)


def train_cfg(cfg) -> TrainConfig:
    return TrainConfig.from_dict(cfg.get("train", {}))


def variant_of(cfg) -> str:
    if cfg.get("extra_capacity"):
        return "extra_capacity"
    return "directed" if cfg.get("directed") else "undirected"


def _input_path(cfg):
    src = cfg["input"]
    if src.startswith("builtin:"):
        name = src.split(":", 1)[1]
        ref = resources.files("ldmkit").joinpath("data", f"{name}.txt")
        if not ref.is_file():
            raise DataError(f"no bundled dataset {name!r}")
        return str(ref)
    if not os.path.isfile(src):
        raise DataError(f"input file not found: {src}")
    return src


def load_graph(cfg) -> Graph:
    g = load_edge_list(_input_path(cfg), directed=bool(cfg.get("directed", False)),
                       bipartite=bool(cfg.get("bipartite", False)),
                       horizon=cfg.get("impact", {}).get("horizon") if cfg["model"] == "disee" else None)
    if cfg["model"] in SIGNED and not np.issubdtype(g.weight.dtype, np.integer):
        raise DataError("signed models need integer weights")
    if cfg["model"] not in SIGNED and g.signed:
        raise DataError(f"{cfg['model']} needs nonnegative weights; use a signed model")
    if cfg["model"] == "disee":
        if not g.timed:
            raise DataError("disee needs a time column")
        if cfg.get("appearance_file"):
            g = _with_appearance(g, cfg["appearance_file"])
    return g


def _with_appearance(g, path):
    if not os.path.isfile(path):
        raise DataError(f"appearance file not found: {path}")
    table = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].split()
            if line:
                table[line[0]] = float(line[1])
    missing = [tok for tok in g.node_ids if tok not in table]
    if missing:
        raise DataError(f"appearance file lacks nodes {missing[:5]}")
    return replace(g, appearance_times=np.asarray([table[t] for t in g.node_ids]))


def _impact(cfg):
    d = dict(cfg.get("impact", {}))
    d.pop("horizon", None)
    return disee.ImpactConfig(**d)


# training dispatch

def _fit(cfg, g: Graph, exclude=None):
    """Returns (params, extras dict, LossReport, final NLL)."""
    model, D, tc = cfg["model"], cfg.get("D", 2), train_cfg(cfg)
    extras = {}
    if model == "ldm":
        params, rep = ldm.ldm_train(g, D, tc)
        nll = ldm.poisson_ldm_nll(g, params)
    elif model == "hbdm":
        params, tree, rep = hbdm.hbdm_train(g, D, tc, rebuild_every=cfg.get("rebuild_every", hbdm.REBUILD_PERIOD))
        nll = (hbdm.hbdm_bipartite_nll if g.bipartite else hbdm.hbdm_nll)(g, params, tree)
        extras["tree"] = tree
        extras["exact_nll"] = ldm.poisson_ldm_nll(g, params)
    elif model == "hm_ldm":
        deltas, p = _simplex_deltas(cfg)
        runs = ldm.hm_ldm_train(g, D, tc, deltas, p)
        delta, params, rep = runs[-1]
        s = SimplexConfig(delta, p)
        nll = ldm.hm_ldm_nll(g, params, s)
        extras["simplex"] = s
        extras["champions"] = {str(d): ldm.champion_fraction(pr).fraction for d, pr, _ in runs}
    elif model in SIGNED:
        variant = variant_of(cfg)
        s = None
        if model == "shm_ldm":
            deltas, p = _simplex_deltas(cfg)
            s = SimplexConfig(deltas[-1], p)
            extras["simplex"] = s
        params, rep = skellam.skellam_train(g, D, model, variant, tc, s, exclude=exclude)
        nll = skellam.skellam_loss(skellam.SignedPairs.from_graph(g, exclude), params, model, variant, 0.0, s,
                                   grad=False)[0]
        if model == "slim":
            extras["A"] = skellam.slim_archetypes(params)[0]
    else:
        imp = _impact(cfg)
        params, rep = disee.disee_train(g, D, imp.family, tc, impact=imp, exclude=exclude)
        nll = disee.sepp_nll(disee.EventPairs.from_graph(g, exclude), params, imp)
        extras["impact"] = imp
    return params, extras, rep, float(nll)


def _ids(g: Graph):
    rows = list(g.node_ids) if g.node_ids is not None else [str(i) for i in range(g.n_rows)]
    if g.bipartite:
        cols = list(g.col_ids) if g.col_ids is not None else [str(i) for i in range(g.n_cols)]
    else:
        cols = rows
    return rows, cols


def _positions(model, params, extras):
    """Embedding matrices to export, keyed by artifact suffix."""
    out = {}
    if model in SIMPLEX_MODELS:
        for key, tag in (("Zlogit", ""), ("Wlogit", "_W"), ("Ulogit", "_U")):
            if key in params:
                out[tag] = softmax(params[key])
        return out
    for key, tag in (("Z", ""), ("W", "_W"), ("U", "_U")):
        if key in params:
            out[tag] = params[key]
    return out


def _file_sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_params_json(path, params, ids_rows, ids_cols, meta=None):
    doc = {"row_ids": ids_rows, "col_ids": ids_cols, "meta": meta or {},
           "params": {k: np.asarray(v).tolist() for k, v in sorted(params.items())}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def read_params_json(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    params = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    return params, doc["row_ids"], doc["col_ids"], doc.get("meta", {})


def cmd_train(cfg) -> dict:
    validate(cfg)
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    g = load_graph(cfg)
    train_g, exclude = g, None
    if "split" in cfg:
        sp = cfg["split"]
        try:
            split = split_edges(g, float(sp.get("fraction", 0.2)), int(sp.get("seed", 0)))
        except SplitError as exc:
            raise DataError(str(exc))
        write_split(split, os.path.join(out, "split"))
        train_g = split.train
        if cfg["model"] in SIGNED:
            # held-out dyads are unobserved rather than zero in the signed likelihood
            exclude = np.vstack([split.test_links, split.test_nonlinks])
    params, extras, rep, nll = _fit(cfg, train_g, exclude)
    rows, cols = _ids(g)
    model = cfg["model"]
    files = []

    def path(name):
        files.append(name)
        return os.path.join(out, name)

    for tag, M in _positions(model, params, extras).items():
        ids = cols if tag == "_W" else rows
        ldm.write_matrix_tsv(path(f"embeddings{tag}.tsv"), ids, M)
    if g.bipartite:
        row_eff = {"psi": params["psi"]}
        ldm.write_effects_tsv(path("effects_cols.tsv"), cols, {"omega": params["omega"]})
    else:
        row_eff = {k: v for k, v in params.items() if np.ndim(v) == 1}
    ldm.write_effects_tsv(path("effects.tsv"), rows, row_eff)
    meta = {"model": model, "variant": variant_of(cfg), "bipartite": bool(cfg.get("bipartite", False))}
    if "simplex" in extras:
        meta["simplex"] = {"delta": extras["simplex"].delta, "p": extras["simplex"].p}
    if "impact" in extras:
        imp = extras["impact"]
        meta["impact"] = {"family": imp.family, "lo": imp.lo, "hi": imp.hi}
        meta["horizon"] = float(train_g.horizon)
        meta["appearance"] = [float(x) for x in disee.default_appearance_times(train_g)]
    write_params_json(path("params.json"), params, rows, cols, meta)
    if "tree" in extras:
        X = np.vstack([params["Z"], params["W"]]) if g.bipartite else params["Z"]
        hbdm.write_tree_json(path("tree.json"), extras["tree"], rows + cols if g.bipartite else rows, X)
    if "A" in extras:
        np.savetxt(path("archetypes.csv"), extras["A"], delimiter=",", fmt="%.17g")
    if "impact" in extras:
        disee.write_impact_csv(params, extras["impact"], path("impact.csv"), rows)
    with open(path("loss_trace.csv"), "w", encoding="utf-8") as fh:
        fh.write("iteration,loss\n")
        for k, v in enumerate(rep.trace):
            fh.write(f"{k},{float(v)!r}\n")
    manifest = {"config_hash": config_hash(cfg), "seed": train_cfg(cfg).seed, "model": model,
                "final_nll": nll, "iterations": len(rep.trace), "grad_inf_norm": rep.grad_inf_norm,
                "files": {name: _file_sha(os.path.join(out, name)) for name in files}}
    if "exact_nll" in extras:
        manifest["exact_nll"] = extras["exact_nll"]
    if "champions" in extras:
        manifest["champion_fraction"] = extras["champions"]
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"trained {model}: final NLL {nll:.6f}; artifacts in {out}")
    return manifest


def _load_run(cfg):
    p = os.path.join(cfg["output_dir"], "params.json")
    if not os.path.isfile(p):
        raise DataError(f"no trained parameters at {p}; run train first")
    return read_params_json(p)


def cmd_eval(cfg):
    validate(cfg, need_input=False)
    params, rows, cols, meta = _load_run(cfg)
    split_dir = os.path.join(cfg["output_dir"], "split")
    test = os.path.join(split_dir, "test.txt")
    if not os.path.isfile(test):
        raise DataError(f"no split at {split_dir}; add a split block and retrain")
    model = cfg["model"]
    if meta.get("model") != model:
        raise ConfigError(f"artifacts were trained with {meta.get('model')!r}, config says {model!r}")
    empty = np.zeros(0, dtype=np.int64)
    ref = Graph(n_rows=len(rows), n_cols=len(cols), src=empty, dst=empty, weight=empty,
                directed=bool(cfg.get("directed", False)), bipartite=bool(cfg.get("bipartite", False)),
                node_ids=rows, col_ids=cols if cfg.get("bipartite") else None)
    pairs, wts, _ = read_test_pairs(test, ref)
    links, lw, zeros = pairs[wts != 0], wts[wts != 0], pairs[wts == 0]
    s = SimplexConfig(**meta["simplex"]) if "simplex" in meta else None
    reports = []
    if model in SIGNED:
        for task, (pp, lab) in signed_task_sets(links, lw, zeros).items():
            sc = score_pairs(model, params, pp, task, meta["variant"], s)
            reports.append(evaluate(task, sc, lab))
    else:
        pp = np.vstack([links, zeros])
        lab = np.r_[np.ones(len(links)), np.zeros(len(zeros))]
        kw = {}
        if model == "disee":
            im = meta["impact"]
            kw = dict(impact=disee.ImpactConfig(im["family"], im["lo"], im["hi"]),
                      appearance=meta["appearance"], horizon=meta["horizon"])
        sc = score_pairs(model, params, pp, "link_pred", meta["variant"], s, **kw)
        reports.append(evaluate("link_pred", sc, lab))
    outp = os.path.join(cfg["output_dir"], "metrics.json")
    write_metrics_json(outp, reports)
    for r in reports:
        print(f"{r.task}: AUC-ROC {r.auc_roc:.4f}  AUC-PR {r.auc_pr:.4f}  (pos {r.n_pos}, neg {r.n_neg})")
    return reports


def cmd_generate(cfg):
    if "generate" not in cfg:
        raise ConfigError("generate needs a 'generate' block")
    if "output_dir" not in cfg:
        raise ConfigError("config needs output_dir")
    try:
        gc = skellam.GenerativeConfig(**cfg["generate"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc))
    out = cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    g, truth = skellam.generate_polarized(gc)
    write_edge_list(g, os.path.join(out, "generated.txt"))
    skellam.write_truth_json(truth, os.path.join(out, "truth.json"))
    stats = reconstruction_stats(g)
    print(f"(density, %pos, %neg) = {format_stats(stats)}")
    return g, truth, stats


def cmd_project(cfg):
    validate(cfg, need_input=False)
    params, rows, cols, meta = _load_run(cfg)
    model = cfg["model"]
    methods = cfg.get("project", {}).get("methods", ["pca"] + (["circular", "ordered"] if model in SIMPLEX_MODELS else []))
    bad = set(methods) - {"pca", "circular", "ordered"}
    if bad:
        raise ConfigError(f"unknown projection methods {sorted(bad)}")
    if model not in SIMPLEX_MODELS and ({"circular", "ordered"} & set(methods)):
        raise ConfigError(f"circular and ordered projections need a simplex model, not {model}")
    Z = softmax(params["Zlogit"]) if model in SIMPLEX_MODELS else params["Z"]
    out = cfg["output_dir"]
    written = []
    if "pca" in methods:
        write_coords_csv(os.path.join(out, "pca.csv"), rows, pca_project(Z))
        written.append("pca.csv")
    if "circular" in methods:
        write_coords_csv(os.path.join(out, "circular.csv"), rows, circular_coords(Z))
        written.append("circular.csv")
    if "ordered" in methods:
        perm = ordered_adjacency(Z)
        with open(os.path.join(out, "ordering.txt"), "w", encoding="utf-8") as fh:
            for k in perm:
                fh.write(f"{rows[k]}\n")
        written.append("ordering.txt")
    print("wrote " + ", ".join(written))
    return written


def cmd_gradcheck(cfg):
    """Finite-difference check of the configured model's loss at a perturbed initial point."""
    validate(cfg)
    g = load_graph(cfg)
    model, D = cfg["model"], cfg.get("D", 2)
    gc = cfg.get("gradcheck", {})
    tol = float(gc.get("tol", 1e-5))
    rng = np.random.default_rng(int(gc.get("seed", 0)))
    tc = train_cfg(cfg)
    if model in ("ldm", "hbdm"):
        p = ldm.init_ldm_params(g, D, tc.seed)
        if model == "ldm":
            fn = lambda q: ldm.poisson_ldm_loss(g, q, tc.rho(0.0))
        else:
            X = np.vstack([p["Z"], p["W"]]) if g.bipartite else p["Z"]
            tree = (hbdm.build_bipartite_hierarchy(p["Z"], p["W"], tc.seed) if g.bipartite
                    else hbdm.build_hierarchy(X, tc.seed))
            lossf = hbdm.hbdm_bipartite_loss if g.bipartite else hbdm.hbdm_loss
            fn = lambda q: lossf(g, q, tree, tc.rho(0.0))
    elif model == "hm_ldm":
        deltas, pw = _simplex_deltas(cfg)
        p = ldm.init_hm_params(g, D, tc.seed)
        fn = lambda q: ldm.hm_ldm_loss(g, q, SimplexConfig(deltas[-1], pw), tc.rho(1.0))
    elif model in SIGNED:
        variant = variant_of(cfg)
        s = None
        if model == "shm_ldm":
            deltas, pw = _simplex_deltas(cfg)
            s = SimplexConfig(deltas[-1], pw)
        P = skellam.SignedPairs.from_graph(g)
        p = skellam.init_skellam_params(g.n_rows, D, model, variant, tc.seed)
        fn = lambda q: skellam.skellam_loss(P, q, model, variant, tc.rho(1.0), s)
    else:
        imp = _impact(cfg)
        P = disee.EventPairs.from_graph(g)
        p = disee.init_disee_params(g, D, imp, tc.seed)
        fn = lambda q: disee.sepp_loss(P, q, imp, tc.rho(0.0), sigma_prior=disee.SIGMA_PRIOR)
    p = {k: v + 0.1 * rng.standard_normal(np.shape(v)) for k, v in p.items()}
    worst = check_gradients(fn, p)
    ok = worst <= tol
    print(f"gradcheck {model}: max relative deviation {worst:.3e} ({'ok' if ok else 'FAILED'}, tol {tol:g})")
    if not ok:
        raise NumericalError("gradient check failed")
    return worst


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "generate": cmd_generate, "project": cmd_project,
            "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="ldmkit", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry (dotted path)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphFormatError, disee.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
