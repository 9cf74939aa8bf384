from __future__ import annotations

import numpy as np

from ..autodiff import no_grad
from ..errors import ContractError


def generate(model, prompt_ids, max_new: int, temperature: float = 1.0, seed: int = 0) -> list[int]:
    """Autoregressive sampling; ``temperature == 0`` picks the argmax.

    The context fed to the model is the last ``m_max`` tokens.
    """
    ids = [int(i) for i in prompt_ids]
    m_max = model.config.m_max
    if not 1 <= len(ids) < m_max:
        raise ContractError(f"prompt length {len(ids)} must be in [1, m_max={m_max})")
    if max_new < 0 or temperature < 0:
        raise ContractError("max_new and temperature must be non-negative")
    rng = np.random.default_rng(seed)
    with no_grad():
        for _ in range(max_new):
            logits = model(np.asarray(ids[-m_max:], dtype=np.int64)).data[-1].astype(np.float64)
            if temperature == 0:
                nxt = int(np.argmax(logits))
            else:
                z = logits / temperature
                z -= z.max()
                p = np.exp(z)
                p /= p.sum()
                nxt = int(rng.choice(len(p), p=p))
            ids.append(nxt)
    return ids
