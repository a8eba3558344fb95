"""PDEForge 入口

    python main.py run-tester ad_gaussian
    python main.py pipeline data/tasks/ad_gaussian.md --backend scripted:fixtures/happy
"""

import sys

from pydantic import ValidationError


def main() -> int:
    # 环境变量在导入配置时解析，格式错误同样按配置错误退出
    try:
        from cli import main as cli_main
    except ValidationError as e:
        print(f"配置无效: {e}", file=sys.stderr)
        return 2
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())
