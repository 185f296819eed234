import re
from pathlib import Path
from typing import Any, Dict, List, Optional

_HEADER_PATTERN = re.compile(r'^#\s*(\w+)\s*:\s*(.*)$')


def extract_model_definition(expr_file_path: Path) -> Dict[str, Any]:
    """
    Reads a model expression file.

    Lines starting with '#' are comments; '# key: value' comments are
    metadata (variables, target, description). All other lines are joined
    into the expression text.

    Args:
        expr_file_path: Path to the .expr file

    Returns:
        Dictionary with name, expression, variables and remaining metadata
    """
    expr_file_path = Path(expr_file_path)
    with open(expr_file_path, 'r', encoding='utf-8') as f:
        lines = f.read().splitlines()

    metadata: Dict[str, str] = {}
    body: List[str] = []
    for line in lines:
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith('#'):
            header = _HEADER_PATTERN.match(stripped)
            if header:
                metadata[header.group(1).lower()] = header.group(2).strip()
            continue
        body.append(stripped)

    expression = ' '.join(body)
    if not expression:
        raise ValueError(f"No expression found in {expr_file_path}")

    variables = None
    if metadata.get('variables'):
        variables = [v.strip() for v in metadata['variables'].split(',') if v.strip()]

    return {
        'name': expr_file_path.stem,
        'expression': expression,
        'variables': variables,
        'target': metadata.get('target'),
        'description': metadata.get('description', ''),
        'path': str(expr_file_path),
    }


def load_models_from_dir(models_dir: Path) -> Dict[str, Dict[str, Any]]:
    """
    Loads all bundled model definitions from a directory of .expr files.

    Args:
        models_dir: Directory containing .expr files

    Returns:
        Dictionary mapping model names to their definitions
    """
    models = {}
    for expr_file in sorted(Path(models_dir).glob('*.expr')):
        model_def = extract_model_definition(expr_file)
        models[model_def['name']] = model_def
    return models


def find_model(name_or_path: str, models_dir: Path) -> Optional[Dict[str, Any]]:
    """Look up a model by file path or by bundled name"""
    candidate = Path(name_or_path)
    if candidate.suffix == '.expr' and candidate.exists():
        return extract_model_definition(candidate)
    return load_models_from_dir(models_dir).get(name_or_path)
