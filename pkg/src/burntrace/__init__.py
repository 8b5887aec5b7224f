"""Blockchain forensics toolkit for OP_RETURN burn campaigns.

Submodules:
  wire       raw block/transaction parsing and serialization
  script     output classification, OP_RETURN payloads, addresses
  codec      base58check and bech32/bech32m
  ledger     UTXO-resolving transaction index
  attrib     callout matching, label propagation, co-spend clustering
  analytics  burn series, campaign/payment statistics, traces, exports
  synth      deterministic synthetic chain generator with ground truth
  cli        command-line entry point
"""

__version__ = "0.1.0"
