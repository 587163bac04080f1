"""Reinforcement fine-tuning of a stochastic ranked retriever for multi-hop QA.

The package is organized as a small numpy library:

- :mod:`rankrl.autodiff` - scratch reverse-mode autodiff tape (float64).
- :mod:`rankrl.encoder` - tokenizer, state rendering, trainable state encoder,
  frozen document encoder.
- :mod:`rankrl.corpus` - document store, frozen embedding index, exact top-K.
- :mod:`rankrl.policy` - Plackett-Luce sampling, exact log-probabilities,
  deterministic ranking, enumeration oracles.
- :mod:`rankrl.env` - multi-hop episode MDP with a scripted chain-QA backend;
  :mod:`rankrl.llm_http` adds an HTTP chat-completion backend.
- :mod:`rankrl.reward` - answer normalization, token F1, exact match.
- :mod:`rankrl.grpo` - rollouts, group-relative advantages, clipped surrogate,
  AdamW, the training loop.
- :mod:`rankrl.harness` - run configuration, commands, metric smoothing;
  :mod:`rankrl.checkpoint` the binary array container; :mod:`rankrl.cli` the
  command-line entry point.
"""

__version__ = "0.1.0"
