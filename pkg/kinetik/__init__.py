# kinetik package
from .cli import main
