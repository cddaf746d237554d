"""
Django settings for DichotomyLab project.

数值实验室只通过 manage.py 的管理命令运行，没有 HTTP 接口。
这里集中放置日志、输出目录以及所有数值默认参数（LAB_CONFIG）。
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")

# 实验室不提供 Web 服务，SECRET_KEY 仅用于满足 Django 启动要求
SECRET_KEY = os.getenv('DJANGO_SECRET_KEY', 'dichotomy-lab-local-only')

DEBUG = os.getenv('LAB_DEBUG', 'False') == 'True'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # 第三方应用
    'rest_framework',
    # 本地应用
    'dichotomy',
]

MIDDLEWARE = []

# Database
# 管理命令与测试都不访问数据库，保留 sqlite 配置只为满足 Django 默认检查
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

# Internationalization

LANGUAGE_CODE = "zh-hans"

TIME_ZONE = "Asia/Shanghai"

USE_I18N = True

USE_TZ = False

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'

# REST Framework 只用到序列化器做配置校验
REST_FRAMEWORK = {
    'UNAUTHENTICATED_USER': None,
}

# 数值实验默认参数
LAB_CONFIG = {
    'EVOLUTION': {
        'CFL_SAFETY': 0.9,                  # 显式格式单调性安全系数
        'EXPLOSION_FACTOR': 1e6,            # 爆破阈值 = 系数 × 数据上确界
        'DT_UNDERFLOW': 1e-14,              # 时间步下溢，判定为刚性失败
        'ONSET_FRACTION': 1e-8,             # 越过断点后的首个时间步（相对名义步长）
        'STEP_GROWTH': 2.0,                 # 断点之后时间步的增长上限
        'RING_CAP_FACTOR': 1e3,             # 环形探针截断值 = 系数 × 数据尺度
        'RING_BLOWUP_FRACTION': 0.5,        # 内部达到截断值的该比例即视为爆破
        'COMPARISON_SLACK': 1e-12,
    },
    'EIGEN': {
        'MAX_ITERATIONS': 100000,
        'FTOL': 1e-15,
        'GTOL': 1e-12,
        'HISTORY_SIZE': 20,
        'EL_TOLERANCE': 1e-6,               # 离散欧拉-拉格朗日相对残差上限
        'NEWTON_STEPS': 50,                 # 下降法之后的牛顿修正步数上限
        'NEWTON_TOLERANCE': 1e-12,
    },
    'DIAGNOSTICS': {
        'SHELL_COUNT': 5,                   # 参与尾部检验的壳层数（K+1）
        'DIVERGENT_RATIO': 0.9,
        'FINITE_RATIO': 0.6,
        'POINT_OCTAVES': 10,                # 点奇异：每层缩小 2^-10
        'SLICE_OCTAVES': 2,                 # 时间片奇异：每层缩小 2^-2
        'SAMPLED_MIN_OCTAVES': 2,           # 采样场每层至少缩小 2^-2
        'MIN_SHELLS': 3,                    # 尾部检验至少需要的壳层数
        'SHELL_NODES': 65,
        'SCAN_SLICES': 257,
        'MINORANT_WINDOW': 0.1,
        'SINGULAR_EXCLUSION': 4,            # 奇点附近排除的网格层数
        'BOUNDARY_LEVELS': 40,
        'HARNACK_PROBE_NODES': 33,
    },
    'REGULARIZATION': {
        'CHUNK_SIZE': 4096,                 # 暴力下卷积分块大小
    },
    'OUTPUT': {
        'DIR': os.getenv('LAB_OUTPUT_DIR', str(BASE_DIR / 'artifacts')),
        'FORMAT': 'csv',
        'FLOAT_DIGITS': 17,
    },
}

# 日志配置
LOG_DIR = BASE_DIR / 'logs'
LOG_DIR.mkdir(exist_ok=True)
LOG_LEVEL = os.getenv('LAB_LOG_LEVEL', 'INFO')
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'file': {
            'level': LOG_LEVEL,
            'class': 'logging.handlers.RotatingFileHandler',  # 使用轮转日志
            'filename': LOG_DIR / 'dichotomy.log',
            'maxBytes': 10 * 1024 * 1024,  # 10MB
            'backupCount': 5,  # 保留5个备份
            'formatter': 'verbose',
            'encoding': 'utf-8',
        },
        'console': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'dichotomy': {
            'handlers': ['file', 'console'],
            'level': LOG_LEVEL,
            'propagate': True,
        },
    },
}
