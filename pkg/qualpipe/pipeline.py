"""The pipeline stages, each reading and writing artifacts under `out_dir`."""

import logging
from pathlib import Path

from qualpipe.artifacts import (
    ATTRIBUTES_FILE,
    BOUNDS_FILE,
    MANIFEST_FILE,
    SCORES_FILE,
    affinity_path,
    assignment_path,
    load_affinity,
    load_assignment,
    load_attribute_sets,
    load_dataset,
    read_pool_ids,
    save_affinity,
    save_assignment,
    save_attribute_sets,
    save_bounds,
    save_scores,
    write_jsonl,
)
from qualpipe.augment import (
    baseline_manifest,
    plan_augmentation,
    select_random_baseline,
)
from qualpipe.config import Config, derive_seed
from qualpipe.discovery import DiscoveryConfig, discover_attributes
from qualpipe.errors import ConfigError, TooFewAttributesError
from qualpipe.gateway import (
    Gateway,
    GatewayMode,
    HttpTransport,
    ResponseCache,
    Transport,
)
from qualpipe.insights import extract_qualitative_samples, run_insights
from qualpipe.metrics import (
    calibration_correlation,
    calibration_distance,
    overall_score,
    prior_alignment,
    proficiency_breakdown,
    score_dataset,
)
from qualpipe.model import (
    ROW_SUM,
    AffinityMatrix,
    AttributeSet,
    Dataset,
    EvalReport,
    Kind,
    Target,
)
from qualpipe.report import write_report
from qualpipe.scoring import compute_priors, score_affinities
from qualpipe.solver import compute_bounds, solve_assignment

logger = logging.getLogger(__package__)

# seeds sent to the endpoint stay within a signed 32-bit integer
REQUEST_SEED_RANGE = 2**31


def make_gateway(cfg: Config, transport: None | Transport = None) -> Gateway:
    """Gateway for `cfg`, talking HTTP unless another transport is given."""
    if transport is None and cfg.mode is not GatewayMode.REPLAY:
        transport = HttpTransport(cfg.base_url)
    return Gateway(
        cfg.mode,
        ResponseCache(cfg.cache_dir),
        transport,
        parallelism=cfg.parallelism,
        model=cfg.model,
        temperature=cfg.temperature,
        seed=derive_seed(cfg.seed, "gateway") % REQUEST_SEED_RANGE,
    )


def _dataset(cfg: Config) -> Dataset:
    if cfg.dataset is None:
        msg = "no dataset given, pass --dataset"
        raise ConfigError(msg)
    if not cfg.dataset.is_file():
        msg = f"--dataset: file not found: {cfg.dataset}"
        raise ConfigError(msg)
    return load_dataset(cfg.dataset, cfg.task_instruction)


def _attribute_sets(cfg: Config) -> dict[Kind, AttributeSet]:
    path = cfg.attributes or cfg.out_dir / ATTRIBUTES_FILE
    if not path.is_file():
        msg = f"--attributes: file not found: {path} (run 'discover' first)"
        raise ConfigError(msg)
    sets = load_attribute_sets(path)
    for kind in Kind:
        if kind not in sets:
            msg = f"{path} holds no {kind.plural}"
            raise ConfigError(msg)
    return sets


def _require(path: Path, stage: str) -> Path:
    if not path.is_file():
        msg = f"missing {path} (run '{stage}' first)"
        raise ConfigError(msg)
    return path


def run_discover(cfg: Config, gateway: Gateway) -> Path:
    """Discover domains and sub-tasks, write `attributes.json`."""
    dataset = _dataset(cfg)
    shuffle = None
    if cfg.shuffle_chunks:
        shuffle = derive_seed(cfg.seed, "discovery.shuffle")
    sets = [
        discover_attributes(
            dataset,
            DiscoveryConfig(
                kind,
                n_final=cfg.n_attributes,
                prune_factor=cfg.prune_factor,
                chunk_size=cfg.chunk_size,
                task=cfg.task,
                include_reference=cfg.discovery_with_reference,
                shuffle_seed=shuffle,
            ),
            gateway,
        )
        for kind in Kind
    ]
    for attrs in sets:
        if len(attrs) < ROW_SUM:
            raise TooFewAttributesError(attrs.kind, len(attrs), ROW_SUM)
    path = cfg.out_dir / ATTRIBUTES_FILE
    save_attribute_sets(path, sets)
    logger.info("attributes written to %s", path)
    return path


def run_score(
    cfg: Config, gateway: Gateway, target: None | Target = None
) -> list[Path]:
    """Score `target` texts (default: the configured one) against the attributes.

    Inputs are scored against both kinds, references and predictions against
    the sub-tasks only.
    """
    target = target or cfg.target
    dataset = _dataset(cfg)
    sets = _attribute_sets(cfg)
    kinds = list(Kind) if target is Target.INPUT else [Kind.SUBTASK]
    paths = []
    for kind in kinds:
        aff = score_affinities(dataset, sets[kind], target, gateway)
        path = affinity_path(cfg.out_dir, target, kind)
        save_affinity(path, aff)
        logger.info("affinities written to %s", path)
        paths.append(path)
    return paths


def _priors(
    cfg: Config, dataset: Dataset, sets: dict[Kind, AttributeSet]
) -> dict[Kind, tuple[AffinityMatrix, AttributeSet]]:
    priors = {}
    for kind in Kind:
        path = _require(affinity_path(cfg.out_dir, Target.INPUT, kind), "score")
        aff = load_affinity(path, sets[kind], dataset.ids, Target.INPUT)
        priors[kind] = (aff, compute_priors(aff, cfg.prior_method))
    return priors


def run_assign(cfg: Config) -> list[Path]:
    """Assign two domains and two sub-tasks to every instance."""
    dataset = _dataset(cfg)
    sets = _attribute_sets(cfg)
    assignments = []
    paths = []
    for kind, (aff, priors) in _priors(cfg, dataset, sets).items():
        bounds = compute_bounds(priors, len(dataset), cfg.epsilon)
        assign = solve_assignment(aff, bounds)
        path = assignment_path(cfg.out_dir, kind)
        save_assignment(path, assign, aff)
        assignments.append(assign)
        paths.append(path)
    bounds_path = cfg.out_dir / BOUNDS_FILE
    save_bounds(bounds_path, assignments)
    logger.info("assignments written to %s", cfg.out_dir)
    return [*paths, bounds_path]


def run_report(cfg: Config, gateway: Gateway) -> dict[str, Path]:
    """Compute metrics, calibration and insights, write the dashboard."""
    dataset = _dataset(cfg)
    sets = _attribute_sets(cfg)
    spec = cfg.metric_spec
    scores = score_dataset(spec, dataset, cfg.metric_timeout)
    save_scores(cfg.out_dir / SCORES_FILE, scores)

    priors = {kind: p for kind, (_, p) in _priors(cfg, dataset, sets).items()}
    bounds_path = _require(cfg.out_dir / BOUNDS_FILE, "assign")
    assignments = {
        kind: load_assignment(
            _require(assignment_path(cfg.out_dir, kind), "assign"), bounds_path, kind
        )
        for kind in Kind
    }
    proficiency = {
        kind: proficiency_breakdown(scores, assign)
        for kind, assign in assignments.items()
    }

    calibration = correlation = None
    samples = ()
    gt_path = affinity_path(cfg.out_dir, Target.REFERENCE, Kind.SUBTASK)
    pred_path = affinity_path(cfg.out_dir, Target.PREDICTION, Kind.SUBTASK)
    if gt_path.is_file() and pred_path.is_file():
        gt = load_affinity(gt_path, sets[Kind.SUBTASK], dataset.ids, Target.REFERENCE)
        pred = load_affinity(
            pred_path, sets[Kind.SUBTASK], dataset.ids, Target.PREDICTION
        )
        calibration = calibration_distance(
            gt, pred, exclude_imputed=cfg.exclude_imputed
        )
        correlation = calibration_correlation(gt, pred)
        samples = extract_qualitative_samples(gt, pred, cfg.top_k)
    else:
        logger.info("no reference and prediction affinities, skipping calibration")

    insights = run_insights(
        dataset.task_instruction,
        priors,
        proficiency,
        calibration,
        gateway,
        combined=cfg.combined_insights,
    )
    alignment = ()
    if cfg.label_key is not None:
        alignment = prior_alignment(priors[Kind.DOMAIN], dataset, cfg.label_key)

    run_config = cfg.snapshot()
    run_config["metric_description"] = spec.description
    run_config["bounds"] = {
        str(kind): a.bounds.to_json() for kind, a in assignments.items()
    }
    run_config["epsilon_used"] = {
        str(kind): a.epsilon_used for kind, a in assignments.items()
    }
    report = EvalReport(
        metric_name=spec.name,
        overall=overall_score(scores),
        attribute_sets=priors,
        proficiency=proficiency,
        calibration=calibration,
        calibration_correlation=correlation,
        insights=insights,
        qualitative_samples=samples,
        prior_alignment=alignment,
        run_config=run_config,
    )
    return write_report(report, cfg.out_dir)


def run_augment(cfg: Config) -> Path:
    """Write a targeted and a random baseline selection to `manifest.jsonl`."""
    if not cfg.domains:
        msg = "no target domains given, pass --domains"
        raise ConfigError(msg)
    dataset = _dataset(cfg)
    bounds_path = _require(cfg.out_dir / BOUNDS_FILE, "assign")
    assign = load_assignment(
        _require(assignment_path(cfg.out_dir, Kind.DOMAIN), "assign"),
        bounds_path,
        Kind.DOMAIN,
    )
    pool = read_pool_ids(cfg.pool) if cfg.pool is not None else list(dataset.ids)
    targeted = plan_augmentation(
        assign,
        pool,
        cfg.domains,
        cfg.budget,
        derive_seed(cfg.seed, "augment.targeted"),
        allow_backfill=cfg.allow_backfill,
    )
    baseline = select_random_baseline(
        pool, cfg.budget, derive_seed(cfg.seed, "augment.baseline")
    )
    path = cfg.out_dir / MANIFEST_FILE
    entries = [*targeted, *baseline_manifest(baseline)]
    write_jsonl(path, (e.to_json() for e in entries))
    logger.info("manifest with %s entries written to %s", len(entries), path)
    return path


def run_all(cfg: Config, gateway: Gateway) -> dict[str, Path]:
    """Run every stage in order.

    References and predictions are scored for calibration when every instance
    has a prediction. Augmentation runs when target domains are configured.
    """
    run_discover(cfg, gateway)
    run_score(cfg, gateway, Target.INPUT)
    if _dataset(cfg).has_predictions:
        run_score(cfg, gateway, Target.REFERENCE)
        run_score(cfg, gateway, Target.PREDICTION)
    run_assign(cfg)
    paths = run_report(cfg, gateway)
    if cfg.domains:
        paths["manifest"] = run_augment(cfg)
    return paths
