const defaults = {
  dateSettings: {
    days: ['Sunday', 'Monday', 'Tuesday', 'Wednesday', 'Thursday', 'Friday', 'Saturday'],
    months: ['January', 'February', 'March', 'April', 'May', 'June', 'July',
      'August', 'September', 'October', 'November', 'December'],
  },
  separators: /[ \-+\/.:@]/g,
}

function merge(target, source) {
  for (const key in source) {
    if (typeof source[key] === 'object' && source[key] !== null) {
      if (!target[key]) {
        target[key] = {}
      }
      merge(target[key], source[key])
    } else {
      target[key] = source[key]
    }
  }
  return target
}

function DateFormatter(options) {
  const settings = merge({}, defaults)
  this.settings = merge(settings, options)
}

DateFormatter.prototype.formatDate = function (date, format) {
  const d = new Date(date)
  const days = this.settings.dateSettings.days
  return format.replace('l', days[d.getDay()]).replace('Y', String(d.getFullYear()))
}

module.exports = DateFormatter
