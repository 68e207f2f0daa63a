"""Model adapters: a deterministic CPU toy flow and a guarded SD3 pipeline."""
from __future__ import annotations

import hashlib
import io
import logging
from typing import Protocol

import numpy as np
from PIL import Image

from .config import TOY_MODEL, BridgeConfig
from .errors import ModelLoadError, RequestError

LOGGER = logging.getLogger(__name__)


class ModelAdapter(Protocol):
    """One loaded model: velocity per condition, similarity scoring, decoding."""

    latent_shape: tuple[int, ...]

    def velocity(self, state: np.ndarray, t: float, text: str) -> np.ndarray: ...

    def similarity(self, state: np.ndarray, text: str) -> float: ...

    def decode(self, state: np.ndarray) -> bytes: ...


def _seed_from_text(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class ToyAdapter:
    """Point-mass rectified flow toward a text-hash embedding.

    Each prompt deterministically maps to a point e(text); the velocity is the
    exact flow for the point-mass target, v(x, t) = (e - x) / (1 - t). Runs on
    CPU with no weights, so the full wire contract is testable anywhere.
    """

    def __init__(self, dim: int = 4):
        if dim < 1:
            raise ModelLoadError(f"toy latent dim must be positive, got {dim}")
        self.latent_shape = (dim,)
        self._dim = dim
        # fixed projection used by decode(): latent -> 8x8 grayscale
        self._projection = np.random.default_rng(0xD3C0DE).standard_normal((64, dim))

    def embed(self, text: str) -> np.ndarray:
        rng = np.random.default_rng(_seed_from_text(text))
        return rng.standard_normal(self._dim) * 1.5

    def velocity(self, state: np.ndarray, t: float, text: str) -> np.ndarray:
        if t >= 1.0:
            raise RequestError("velocity is undefined at t = 1 for a point-mass flow")
        return (self.embed(text) - state) / (1.0 - t)

    def similarity(self, state: np.ndarray, text: str) -> float:
        gap = state - self.embed(text)
        return float(np.exp(-np.dot(gap, gap) / (2.0 * self._dim)))

    def decode(self, state: np.ndarray) -> bytes:
        pixels = 1.0 / (1.0 + np.exp(-self._projection @ state))
        gray = (pixels.reshape(8, 8) * 255).astype(np.uint8)
        image = Image.fromarray(gray, mode="L").resize((64, 64), Image.NEAREST)
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


class SD3Adapter:
    """Stable Diffusion 3 through diffusers; requires torch + the checkpoint.

    SD3 is trained as rectified flow over sigma in [0, 1] with x_sigma =
    (1 - sigma) * data + sigma * noise and the transformer predicting
    d x / d sigma. This server's time axis runs the other way (t = 1 - sigma,
    noise at t = 0), so the served velocity is the negated model output.

    Similarity uses the CLIP checkpoint named in BridgeConfig over a cheap
    latent preview (first three latent channels scaled to RGB); the paper-grade
    VAE decode only runs for /v1/decode. The pooled text encoder choice is
    whatever that CLIP checkpoint ships with.
    """

    def __init__(self, config: BridgeConfig):
        try:
            import torch
            from diffusers import StableDiffusion3Pipeline
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(f"SD3 dependencies unavailable: {exc}") from exc
        self._torch = torch
        device = config.device
        if device == "auto":
            device = "cuda" if torch.cuda.is_available() else "cpu"
        dtype = torch.float16 if device == "cuda" else torch.float32
        try:
            self._pipe = StableDiffusion3Pipeline.from_pretrained(
                config.model, torch_dtype=dtype).to(device)
            self._clip = CLIPModel.from_pretrained(config.similarity_model).to(device)
            self._clip_processor = CLIPProcessor.from_pretrained(config.similarity_model)
        except Exception as exc:
            raise ModelLoadError(f"could not load {config.model!r}: {exc}") from exc
        self._device = device
        self._dtype = dtype
        channels = self._pipe.transformer.config.in_channels
        size = self._pipe.default_sample_size
        self.latent_shape = (channels, size, size)
        self._embed_cache: dict[str, tuple] = {}

    def _encode(self, text: str):
        if text not in self._embed_cache:
            embeds, _, pooled, _ = self._pipe.encode_prompt(
                prompt=text, prompt_2=None, prompt_3=None, device=self._device,
                num_images_per_prompt=1, do_classifier_free_guidance=False)
            self._embed_cache[text] = (embeds, pooled)
        return self._embed_cache[text]

    def velocity(self, state: np.ndarray, t: float, text: str) -> np.ndarray:
        torch = self._torch
        if not 0.0 <= t < 1.0:
            raise RequestError(f"t must lie in [0, 1), got {t}")
        sigma = 1.0 - t
        embeds, pooled = self._encode(text)
        latents = torch.from_numpy(np.asarray(state, dtype=np.float32))
        latents = latents.unsqueeze(0).to(self._device, dtype=self._dtype)
        timestep = torch.tensor([sigma * 1000.0], device=self._device)
        with torch.no_grad():
            model_out = self._pipe.transformer(
                hidden_states=latents, timestep=timestep,
                encoder_hidden_states=embeds, pooled_projections=pooled,
                return_dict=False)[0]
        return -model_out[0].float().cpu().numpy()

    def _preview(self, state: np.ndarray) -> Image.Image:
        # cheap latent-to-image approximation: three channels stretched to RGB
        rgb = np.asarray(state, dtype=np.float32)[:3]
        lo, hi = rgb.min(), rgb.max()
        rgb = (rgb - lo) / (hi - lo + 1e-8)
        return Image.fromarray((rgb.transpose(1, 2, 0) * 255).astype(np.uint8))

    def similarity(self, state: np.ndarray, text: str) -> float:
        torch = self._torch
        inputs = self._clip_processor(text=[text], images=self._preview(state),
                                      return_tensors="pt", padding=True)
        inputs = {k: v.to(self._device) for k, v in inputs.items()}
        with torch.no_grad():
            out = self._clip(**inputs)
        image = out.image_embeds / out.image_embeds.norm(dim=-1, keepdim=True)
        texts = out.text_embeds / out.text_embeds.norm(dim=-1, keepdim=True)
        return float((image * texts).sum().clamp(-1.0, 1.0).cpu())

    def decode(self, state: np.ndarray) -> bytes:
        torch = self._torch
        vae = self._pipe.vae
        latents = torch.from_numpy(np.asarray(state, dtype=np.float32)).unsqueeze(0)
        latents = latents.to(self._device, dtype=self._dtype)
        latents = latents / vae.config.scaling_factor + vae.config.shift_factor
        with torch.no_grad():
            image = vae.decode(latents, return_dict=False)[0]
        image = self._pipe.image_processor.postprocess(image, output_type="pil")[0]
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return buf.getvalue()


def load_adapter(config: BridgeConfig) -> tuple[ModelAdapter | None, str | None]:
    """Load the configured model; on failure return (None, reason) for health."""
    try:
        if config.model == TOY_MODEL:
            dim = config.latent_shape[0] if config.latent_shape else 4
            adapter: ModelAdapter = ToyAdapter(dim=dim)
        else:
            adapter = SD3Adapter(config)
    except Exception as exc:
        LOGGER.error("model load failed: %s", exc)
        return None, str(exc)
    if config.latent_shape is not None and adapter.latent_shape != config.latent_shape:
        return None, (f"advertised latent shape {list(config.latent_shape)} does not "
                      f"match the model's {list(adapter.latent_shape)}")
    return adapter, None
