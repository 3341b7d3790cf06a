"""Desk-scale distributed reinforcement learning stack.

Subpackages:

* :mod:`minisurreal.wireproto` -- framing, value codec, push-pull / pub-sub channels
* :mod:`minisurreal.orchestra` -- experiment declaration, addressing, launch backends
* :mod:`minisurreal.provision` -- machine-type mapping and cluster spec files
* :mod:`minisurreal.datasvc` -- experience buffer shards, routing, parameter server
* :mod:`minisurreal.envs` -- built-in continuous-control environments
* :mod:`minisurreal.nnet` -- MLPs with manual gradients, Gaussian policy helpers
* :mod:`minisurreal.algo` -- distributed PPO and ES
"""

__version__ = "0.1.0"
