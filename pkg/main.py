#!/usr/bin/env python3
"""
ChazyScatter - Diffusion hyperbolique du problème des n corps
Point d'entrée en ligne de commande

Commandes: simulate, scatter, sweep, verify, kepler-check
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

# Ajouter le répertoire racine au path pour les imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from config.constants import APP_TITLE, APP_VERSION, EXIT_CONFIG_ERROR, EXIT_FAILURE, EXIT_OK
from config.settings import RunConfig
from core.engine import COMMANDS, ExperimentEngine
from core.errors import ConfigError, ScatteringLabError
from utils.save_manager import SaveManager

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chazyscatter",
        description=f"{APP_TITLE} {APP_VERSION} - application de diffusion des orbites hyperboliques",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = subparsers.add_parser(command)
        sub.add_argument("--config", required=True, help="document JSON de configuration")
        sub.add_argument("--out", help="répertoire de sortie (prioritaire sur output.dir)")
        sub.add_argument("--tol-scale", type=float, help="facteur appliqué aux tolérances d'intégration")
        sub.add_argument("--workers", type=int, help="nombre de processus du balayage")
        sub.add_argument("--seed-scale", type=float, help="échelle de graine sur les variétés")
    return parser


def _emit_error(error: BaseException, code: int, save_manager: Optional[SaveManager] = None) -> int:
    """Écrit l'enregistrement d'erreur sur stderr, et dans le répertoire de sortie s'il existe"""
    record = SaveManager.error_record(error, code)
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
    if save_manager is not None:
        try:
            save_manager.write_error(record)
        except OSError:
            logger.exception("Impossible d'écrire l'enregistrement d'erreur")
    return code


def _exit_code(command: str, result) -> int:
    if command == "verify":
        return EXIT_OK if result.passed else EXIT_FAILURE
    if command == "kepler-check":
        return EXIT_OK if result["passed"] else EXIT_FAILURE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """
    Fonction principale - Lit la configuration et exécute la commande demandée

    Returns:
        0 en cas de succès, 2 pour une configuration invalide, 1 pour tout autre échec
    """
    args = build_parser().parse_args(argv)

    try:
        config = RunConfig(args.config)
        config.apply_overrides(out=args.out, tol_scale=args.tol_scale, workers=args.workers,
                               seed_scale=args.seed_scale)
        config.validate()
    except ConfigError as e:
        logging.basicConfig(level=logging.INFO)
        return _emit_error(e, EXIT_CONFIG_ERROR)

    logging.basicConfig(
        level=getattr(logging, config.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    engine = None
    try:
        engine = ExperimentEngine(config)
        result = engine.run(args.command)
    except ConfigError as e:
        return _emit_error(e, EXIT_CONFIG_ERROR, engine.save_manager if engine else None)
    except (ScatteringLabError, ValueError, OSError) as e:
        logger.error("Échec de la commande %s: %s", args.command, e)
        return _emit_error(e, EXIT_FAILURE, engine.save_manager if engine else None)
    except KeyboardInterrupt:
        logger.warning("Arrêt demandé par l'utilisateur")
        return EXIT_FAILURE

    return _exit_code(args.command, result)


if __name__ == "__main__":
    sys.exit(main())
