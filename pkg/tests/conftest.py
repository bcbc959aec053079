from __future__ import annotations
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

import pytest
import torch
import yaml
from hypothesis import HealthCheck, settings
from torch.autograd import gradcheck
from torch.func import functional_call

from anchorpipe.config import PipelineConfig, config_from_dict
from anchorpipe.io_corpus import Corpus, load_corpus
from anchorpipe.oracle_corpus import RenderSpec, default_viseme_table, generate_corpus

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=200, deadline=None)
settings.load_profile("default")

TINY: Dict = {
    "seed": 0,
    "image_hw": [16, 16],
    "embed_dim": 8,
    "t_max": 40,
    "seq2au": {"hidden_size": 8, "batch_size": 2, "steps": 4, "checkpoint_every": 0},
    "gan": {"ngf": 4, "ndf": 4, "n_blocks": 1, "d_layers": 3, "batch_size": 2, "steps": 2,
            "checkpoint_every": 0, "perceptual_weights": [1.0]},
    "corpus": {"supersample": 2},
}

TOY_SENTENCES = ["good evening", "the weather is calm", "hello again", "we will see"]

GRAD_EPS = 1e-5
GRAD_RTOL = 1e-4
GRAD_ATOL = 1e-6


@pytest.fixture
def tiny_dict() -> Dict:
    return yaml.safe_load(yaml.safe_dump(TINY))


@pytest.fixture
def tiny_cfg() -> PipelineConfig:
    return config_from_dict(yaml.safe_load(yaml.safe_dump(TINY)))


@pytest.fixture
def tiny_config_file(tmp_path) -> Path:
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY), encoding="utf-8")
    return path


@pytest.fixture
def toy_sentences() -> list:
    return list(TOY_SENTENCES)


def make_corpus(out_dir: Path, cfg: PipelineConfig, sentences: Sequence[str] = TOY_SENTENCES, workers: int = 1) -> dict:
    h, w = cfg.image_hw
    table = default_viseme_table(cfg.seed, cfg.corpus.frames_per_word, cfg.corpus.num_patterns)
    spec = RenderSpec(height=h, width=w, supersample=cfg.corpus.supersample)
    return generate_corpus(sentences, table, spec, out_dir, workers=workers, quiet=True)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    out = tmp_path_factory.mktemp("corpus")
    make_corpus(out, config_from_dict(TINY))
    return out


@pytest.fixture(scope="session")
def corpus(corpus_dir) -> Corpus:
    return load_corpus(corpus_dir, 12, load_frames=True)


@pytest.fixture
def corpus_factory() -> Callable[..., dict]:
    return make_corpus


def _param_gradcheck(module: torch.nn.Module, loss_fn: Callable, names: Optional[Sequence[str]] = None,
                     fast_mode: bool = False) -> bool:
    """gradcheck of ``loss_fn(call)`` w.r.t. the named parameters (all when ``names`` is None).

    ``call(*args)`` runs the module with the perturbed parameters substituted in.
    """
    module = module.double()
    params = {n: p.detach() for n, p in module.named_parameters()}
    names = list(params) if names is None else list(names)
    chosen = tuple(params[n].clone().requires_grad_(True) for n in names)

    def f(*tensors):
        state = dict(params)
        state.update(zip(names, tensors))
        return loss_fn(lambda *args: functional_call(module, state, args))

    return gradcheck(f, chosen, eps=GRAD_EPS, atol=GRAD_ATOL, rtol=GRAD_RTOL, fast_mode=fast_mode)


@pytest.fixture
def param_gradcheck() -> Callable[..., bool]:
    return _param_gradcheck


@pytest.fixture
def input_gradcheck() -> Callable[..., bool]:
    def check(fn: Callable, *inputs: torch.Tensor, fast_mode: bool = False) -> bool:
        leaves = tuple(x.detach().double().requires_grad_(True) for x in inputs)
        return gradcheck(fn, leaves, eps=GRAD_EPS, atol=GRAD_ATOL, rtol=GRAD_RTOL, fast_mode=fast_mode)
    return check
