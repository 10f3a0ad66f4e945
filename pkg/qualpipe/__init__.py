from .artifacts import load_dataset as load_dataset
from .augment import plan_augmentation as plan_augmentation
from .augment import select_augmentation as select_augmentation
from .augment import select_random_baseline as select_random_baseline
from .config import Config as Config
from .config import load_config as load_config
from .discovery import DiscoveryConfig as DiscoveryConfig
from .discovery import discover_attributes as discover_attributes
from .discovery import prune_candidates as prune_candidates
from .discovery import propose_candidates as propose_candidates
from .gateway import ChatRequest as ChatRequest
from .gateway import Gateway as Gateway
from .gateway import GatewayMode as GatewayMode
from .gateway import HttpTransport as HttpTransport
from .gateway import ResponseCache as ResponseCache
from .gateway import ScriptedTransport as ScriptedTransport
from .insights import build_insight_prompt as build_insight_prompt
from .insights import extract_qualitative_samples as extract_qualitative_samples
from .insights import generate_insights as generate_insights
from .metrics import MetricSpec as MetricSpec
from .metrics import calibration_correlation as calibration_correlation
from .metrics import calibration_distance as calibration_distance
from .metrics import exact_match as exact_match
from .metrics import overall_score as overall_score
from .metrics import proficiency_breakdown as proficiency_breakdown
from .metrics import rouge_l as rouge_l
from .model import AffinityMatrix as AffinityMatrix
from .model import AssignmentMatrix as AssignmentMatrix
from .model import AttributeSet as AttributeSet
from .model import Dataset as Dataset
from .model import EvalReport as EvalReport
from .model import Kind as Kind
from .model import LpBounds as LpBounds
from .model import Target as Target
from .report import render_bar_chart as render_bar_chart
from .report import render_dashboard as render_dashboard
from .report import write_report as write_report
from .scoring import compute_priors as compute_priors
from .scoring import score_affinities as score_affinities
from .solver import brute_force_assignment as brute_force_assignment
from .solver import compute_bounds as compute_bounds
from .solver import solve_assignment as solve_assignment
