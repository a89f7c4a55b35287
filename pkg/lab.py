import logging
import os
import sys

import config
from core.tools import CommandRegistry

# Enable logging
logging.basicConfig(format=config.LOG_FORMAT, level=logging.INFO)
logger = logging.getLogger(__name__)

# Initialize commands
registry = CommandRegistry()
registry.load_modules(os.path.join(os.path.dirname(os.path.abspath(__file__)), config.MODULES_DIR))


def main(argv=None) -> int:
    parser = registry.build_parser()
    args = vars(parser.parse_args(argv))
    if args.pop("verbose"):
        logging.getLogger().setLevel(logging.DEBUG)
    command = args.pop("command")
    logger.debug("Running %s with %s", command, args)
    return registry.execute(command, **args)


if __name__ == "__main__":
    sys.exit(main())
